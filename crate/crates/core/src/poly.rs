//! Multivariate polynomial surrogates over the 10-D feature vector.
//!
//! A model of degree `d` carries one coefficient per monomial of total
//! degree at most `d`, in graded-lexicographic order: by total degree, then
//! lexicographically by exponent with the first variable most significant.
//! At `d = 5` that is 3003 coefficients.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{ColPivQR, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, Normalizers, B_INDEX, FEATURE_DIM, W_INDEX};

pub const DEFAULT_RIDGE: f64 = 1e-3;
pub const MONOMIAL_ORDER: &str = "grlex";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    #[serde(rename = "PG")]
    Pg,
    #[serde(rename = "EG")]
    Eg,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Pg => "PG",
            Target::Eg => "EG",
        })
    }
}

/// Exponent vectors of every monomial up to a total degree, in grlex order.
#[derive(Debug, PartialEq, Eq)]
pub struct Basis {
    degree: u32,
    exponents: Vec<[u8; FEATURE_DIM]>,
}

impl Basis {
    pub fn new(degree: u32) -> Self {
        let mut exponents = Vec::new();
        let mut current = [0u8; FEATURE_DIM];
        for total in 0..=degree {
            push_lex_desc(&mut exponents, &mut current, 0, total);
        }
        Basis { degree, exponents }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[[u8; FEATURE_DIM]] {
        &self.exponents
    }

    pub fn index_of(&self, exponents: &[u8; FEATURE_DIM]) -> Option<usize> {
        self.exponents.iter().position(|e| e == exponents)
    }

    /// Evaluates every monomial at `x` into `out`.
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let pw = powers(x, self.degree);
        for (slot, exps) in out.iter_mut().zip(&self.exponents) {
            *slot = exps
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(v, &e)| pw[v][e as usize])
                .product();
        }
    }
}

fn push_lex_desc(
    out: &mut Vec<[u8; FEATURE_DIM]>,
    current: &mut [u8; FEATURE_DIM],
    var: usize,
    remaining: u32,
) {
    if var == FEATURE_DIM - 1 {
        current[var] = remaining as u8;
        out.push(*current);
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e as u8;
        push_lex_desc(out, current, var + 1, remaining - e);
    }
    current[var] = 0;
}

fn powers(x: &[f64], degree: u32) -> Vec<Vec<f64>> {
    x.iter()
        .map(|&v| {
            let mut p = Vec::with_capacity(degree as usize + 1);
            let mut acc = 1.0;
            for _ in 0..=degree {
                p.push(acc);
                acc *= v;
            }
            p
        })
        .collect()
}

/// Number of monomials of total degree at most `degree` in `dim` variables.
pub fn coefficient_count(dim: usize, degree: u32) -> usize {
    let (n, k) = (dim as u64 + degree as u64, degree as u64);
    (1..=k).fold(1u64, |acc, i| acc * (n - k + i) / i) as usize
}

#[derive(Debug, Clone)]
pub struct PolyModel {
    target: Target,
    basis: Arc<Basis>,
    coefficients: Vec<f64>,
    normalizers: Normalizers,
    training_rmse: Option<f64>,
}

impl PolyModel {
    pub fn from_coefficients(
        target: Target,
        degree: u32,
        coefficients: Vec<f64>,
        normalizers: Normalizers,
    ) -> Result<Self> {
        let basis = Arc::new(Basis::new(degree));
        if coefficients.len() != basis.len() {
            return Err(Error::Model(format!(
                "degree {degree} needs {} coefficients, got {}",
                basis.len(),
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Model("non-finite coefficient".into()));
        }
        Ok(PolyModel {
            target,
            basis,
            coefficients,
            normalizers,
            training_rmse: None,
        })
    }

    pub fn zero(target: Target, degree: u32, normalizers: Normalizers) -> Self {
        let n = coefficient_count(FEATURE_DIM, degree);
        Self::from_coefficients(target, degree, vec![0.0; n], normalizers).expect("sized")
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn degree(&self) -> u32 {
        self.basis.degree
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn normalizers(&self) -> &Normalizers {
        &self.normalizers
    }

    pub fn training_rmse(&self) -> Option<f64> {
        self.training_rmse
    }

    pub fn predict(&self, fv: &[f64]) -> Result<f64> {
        check_dim(fv)?;
        Ok(self.eval(fv))
    }

    fn eval(&self, fv: &[f64]) -> f64 {
        let pw = powers(fv, self.degree());
        self.basis
            .exponents
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, c)| **c != 0.0)
            .map(|(exps, c)| {
                let term: f64 = exps
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(v, &e)| pw[v][e as usize])
                    .product();
                c * term
            })
            .sum()
    }

    /// Analytic partial derivatives with respect to the normalized `w` and
    /// `b` components.
    pub fn grad_wb(&self, fv: &[f64]) -> Result<(f64, f64)> {
        check_dim(fv)?;
        let pw = powers(fv, self.degree());
        let (mut dw, mut db) = (0.0, 0.0);
        for (exps, &c) in self.basis.exponents.iter().zip(&self.coefficients) {
            let (ew, eb) = (exps[W_INDEX] as usize, exps[B_INDEX] as usize);
            if c == 0.0 || (ew == 0 && eb == 0) {
                continue;
            }
            let rest: f64 = exps[..W_INDEX]
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(v, &e)| pw[v][e as usize])
                .product();
            let (pw_w, pw_b) = (&pw[W_INDEX], &pw[B_INDEX]);
            if ew > 0 {
                dw += c * rest * ew as f64 * pw_w[ew - 1] * pw_b[eb];
            }
            if eb > 0 {
                db += c * rest * pw_w[ew] * eb as f64 * pw_b[eb - 1];
            }
        }
        Ok((dw, db))
    }

    /// Collapses the model onto `(w, b)` with the eight trace components
    /// fixed at `context`.
    pub fn restrict_to_wb(&self, context: &[f64; 8]) -> WbPolynomial {
        let d = self.degree() as usize;
        let pw = powers(context, self.degree());
        let mut coeffs = vec![0.0; (d + 1) * (d + 1)];
        for (exps, &c) in self.basis.exponents.iter().zip(&self.coefficients) {
            if c == 0.0 {
                continue;
            }
            let rest: f64 = exps[..W_INDEX]
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(v, &e)| pw[v][e as usize])
                .product();
            coeffs[exps[W_INDEX] as usize * (d + 1) + exps[B_INDEX] as usize] += c * rest;
        }
        WbPolynomial { degree: d, coeffs }
    }

    /// Sum of two models of the same target and degree, scaled.
    pub fn combine(&self, a: f64, other: &PolyModel, b: f64) -> Result<PolyModel> {
        if self.degree() != other.degree() {
            return Err(Error::Model(
                "cannot combine models of different degree".into(),
            ));
        }
        let coefficients = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(PolyModel {
            coefficients,
            training_rmse: None,
            ..self.clone()
        })
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            target: self.target,
            degree: self.degree(),
            dimension: FEATURE_DIM,
            monomial_order: MONOMIAL_ORDER.to_owned(),
            coefficients: self.coefficients.clone(),
            normalizers: self.normalizers,
            training_rmse: self.training_rmse,
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.dimension != FEATURE_DIM {
            return Err(Error::Dimension {
                expected: FEATURE_DIM,
                got: file.dimension,
            });
        }
        if file.monomial_order != MONOMIAL_ORDER {
            return Err(Error::Model(format!(
                "unsupported monomial order `{}`",
                file.monomial_order
            )));
        }
        let mut model = Self::from_coefficients(
            file.target,
            file.degree,
            file.coefficients,
            file.normalizers,
        )?;
        model.training_rmse = file.training_rmse;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_file())?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        Self::from_file(file)
    }
}

fn check_dim(fv: &[f64]) -> Result<()> {
    if fv.len() != FEATURE_DIM {
        return Err(Error::Dimension {
            expected: FEATURE_DIM,
            got: fv.len(),
        });
    }
    Ok(())
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub target: Target,
    pub degree: u32,
    pub dimension: usize,
    pub monomial_order: String,
    pub coefficients: Vec<f64>,
    pub normalizers: Normalizers,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_rmse: Option<f64>,
}

/// A bivariate polynomial `sum c[i][j] w^i b^j` with `i + j <= degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct WbPolynomial {
    degree: usize,
    coeffs: Vec<f64>,
}

impl WbPolynomial {
    fn c(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * (self.degree + 1) + j]
    }

    pub fn value(&self, w: f64, b: f64) -> f64 {
        let mut acc = 0.0;
        for i in (0..=self.degree).rev() {
            let mut row = 0.0;
            for j in (0..=self.degree - i).rev() {
                row = row * b + self.c(i, j);
            }
            acc = acc * w + row;
        }
        acc
    }

    pub fn gradient(&self, w: f64, b: f64) -> (f64, f64) {
        let (mut dw, mut db) = (0.0, 0.0);
        for i in 0..=self.degree {
            for j in 0..=self.degree - i {
                let c = self.c(i, j);
                if c == 0.0 {
                    continue;
                }
                if i > 0 {
                    dw += c * i as f64 * w.powi(i as i32 - 1) * b.powi(j as i32);
                }
                if j > 0 {
                    db += c * j as f64 * w.powi(i as i32) * b.powi(j as i32 - 1);
                }
            }
        }
        (dw, db)
    }

    pub fn constant(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn without_constant(mut self) -> WbPolynomial {
        self.coeffs[0] = 0.0;
        self
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &WbPolynomial, b: f64) -> WbPolynomial {
        debug_assert_eq!(self.degree, other.degree);
        WbPolynomial {
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub fv: FeatureVector,
    pub pg: f64,
    pub eg: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub rows: Vec<DataRow>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("f0,f1,f2,f3,f4,f5,f6,f7,w,b,pg,eg\n");
        for row in &self.rows {
            for v in row.fv.0 {
                out.push_str(&v.to_string());
                out.push(',');
            }
            out.push_str(&format!("{},{}\n", row.pg, row.eg));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (idx, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let values = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| err(format!("`{s}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != FEATURE_DIM + 2 {
                return Err(err(format!(
                    "expected {} columns, got {}",
                    FEATURE_DIM + 2,
                    values.len()
                )));
            }
            let mut fv = [0.0; FEATURE_DIM];
            fv.copy_from_slice(&values[..FEATURE_DIM]);
            rows.push(DataRow {
                fv: FeatureVector(fv),
                pg: values[FEATURE_DIM],
                eg: values[FEATURE_DIM + 1],
            });
        }
        Ok(Dataset { rows })
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub pg: PolyModel,
    pub eg: PolyModel,
    pub rmse_pg: f64,
    pub rmse_eg: f64,
}

const GRAM_BLOCK: usize = 512;

/// Fits PG and EG models by least squares with ridge penalty `ridge` on every
/// coefficient except the constant term.
///
/// With `ridge = 0` the problem is solved by column-pivoted QR of the design
/// matrix and rank deficiency is an error. With `ridge > 0` the centered
/// normal equations (or, for fewer rows than coefficients, their dual) are
/// solved by Cholesky.
pub fn fit(data: &Dataset, degree: u32, ridge: f64, normalizers: Normalizers) -> Result<FitOutput> {
    if data.is_empty() {
        return Err(Error::InvalidParams("cannot fit an empty dataset".into()));
    }
    if !(1..=8).contains(&degree) {
        return Err(Error::InvalidParams(format!("unsupported degree {degree}")));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParams(
            "ridge must be finite and non-negative".into(),
        ));
    }
    if data.rows.iter().any(|r| {
        r.fv.0.iter().any(|v| !(0.0..=1.0).contains(v)) || !r.pg.is_finite() || !r.eg.is_finite()
    }) {
        return Err(Error::InvalidParams(
            "dataset features must lie in [0, 1] and targets be finite".into(),
        ));
    }
    let basis = Arc::new(Basis::new(degree));
    let coeffs = if ridge == 0.0 {
        solve_exact(data, &basis)?
    } else {
        solve_ridge(data, &basis, ridge)?
    };

    let make = |target, column: usize| PolyModel {
        target,
        basis: basis.clone(),
        coefficients: coeffs.column(column).iter().copied().collect(),
        normalizers,
        training_rmse: None,
    };
    let (mut pg, mut eg) = (make(Target::Pg, 0), make(Target::Eg, 1));
    if pg
        .coefficients
        .iter()
        .chain(&eg.coefficients)
        .any(|c| !c.is_finite())
    {
        return Err(Error::Singular("solution is not finite".into()));
    }
    let rmse = |m: &PolyModel, pick: fn(&DataRow) -> f64| {
        let sse: f64 = data
            .rows
            .iter()
            .map(|r| (m.eval(&r.fv.0) - pick(r)).powi(2))
            .sum();
        (sse / data.len() as f64).sqrt()
    };
    let rmse_pg = rmse(&pg, |r| r.pg);
    let rmse_eg = rmse(&eg, |r| r.eg);
    pg.training_rmse = Some(rmse_pg);
    eg.training_rmse = Some(rmse_eg);
    Ok(FitOutput {
        pg,
        eg,
        rmse_pg,
        rmse_eg,
    })
}

fn targets(data: &Dataset) -> DMatrix<f64> {
    DMatrix::from_fn(data.len(), 2, |i, j| {
        if j == 0 {
            data.rows[i].pg
        } else {
            data.rows[i].eg
        }
    })
}

fn solve_exact(data: &Dataset, basis: &Basis) -> Result<DMatrix<f64>> {
    let (n, p) = (data.len(), basis.len());
    if n < p {
        return Err(Error::Singular(format!("{n} rows for {p} coefficients")));
    }
    let mut x = DMatrix::zeros(n, p);
    let mut row = vec![0.0; p];
    for (i, r) in data.rows.iter().enumerate() {
        basis.eval_into(&r.fv.0, &mut row);
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    let qr = ColPivQR::new(x);
    let r = qr.r();
    let scale = r[(0, 0)].abs();
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE) * (n.max(p) as f64).sqrt();
    if (0..p).any(|k| r[(k, k)].abs() <= tol) {
        return Err(Error::Singular("design matrix is rank deficient".into()));
    }
    let mut rhs = targets(data);
    qr.q_tr_mul(&mut rhs);
    let mut z = rhs.rows(0, p).into_owned();
    let upper = r.rows(0, p).into_owned();
    if !upper.solve_upper_triangular_mut(&mut z) {
        return Err(Error::Singular("triangular solve failed".into()));
    }
    qr.p().inv_permute_rows(&mut z);
    Ok(z)
}

fn solve_ridge(data: &Dataset, basis: &Basis, ridge: f64) -> Result<DMatrix<f64>> {
    let (n, p) = (data.len(), basis.len());
    let m = p - 1;
    let mut row = vec![0.0; p];

    let mut mean = vec![0.0; m];
    for r in &data.rows {
        basis.eval_into(&r.fv.0, &mut row);
        for (acc, v) in mean.iter_mut().zip(&row[1..]) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let y = targets(data);
    let y_mean = [y.column(0).mean(), y.column(1).mean()];
    let yc = DMatrix::from_fn(n, 2, |i, j| y[(i, j)] - y_mean[j]);

    let centered_row = |r: &DataRow, out: &mut [f64], buf: &mut [f64]| {
        basis.eval_into(&r.fv.0, buf);
        for ((o, v), mu) in out.iter_mut().zip(&buf[1..]).zip(&mean) {
            *o = v - mu;
        }
    };

    let slopes = if n >= m {
        let mut gram = DMatrix::<f64>::zeros(m, m);
        let mut xty = DMatrix::<f64>::zeros(m, 2);
        let mut out = vec![0.0; m];
        for (b, chunk) in data.rows.chunks(GRAM_BLOCK).enumerate() {
            // Rows of the design block are stored as columns, so both
            // products are plain (non-transposed) GEMMs.
            let mut block_t = DMatrix::<f64>::zeros(m, chunk.len());
            for (i, r) in chunk.iter().enumerate() {
                centered_row(r, &mut out, &mut row);
                block_t.column_mut(i).copy_from_slice(&out);
            }
            let yb = yc.rows(b * GRAM_BLOCK, chunk.len());
            gram.gemm(1.0, &block_t, &block_t.transpose(), 1.0);
            xty.gemm(1.0, &block_t, &yb, 1.0);
        }
        for k in 0..m {
            gram[(k, k)] += ridge;
        }
        let chol = gram.cholesky().ok_or_else(|| {
            Error::Singular("Cholesky of the regularized Gram matrix failed".into())
        })?;
        chol.solve(&xty)
    } else {
        let mut xc = DMatrix::<f64>::zeros(n, m);
        let mut out = vec![0.0; m];
        for (i, r) in data.rows.iter().enumerate() {
            centered_row(r, &mut out, &mut row);
            for (j, v) in out.iter().enumerate() {
                xc[(i, j)] = *v;
            }
        }
        let mut kernel = &xc * xc.transpose();
        for k in 0..n {
            kernel[(k, k)] += ridge;
        }
        let chol = kernel
            .cholesky()
            .ok_or_else(|| Error::Singular("Cholesky of the regularized kernel failed".into()))?;
        xc.transpose() * chol.solve(&yc)
    };

    let mut coeffs = DMatrix::<f64>::zeros(p, 2);
    for j in 0..2 {
        let offset: f64 = mean
            .iter()
            .zip(slopes.column(j).iter())
            .map(|(mu, c)| mu * c)
            .sum();
        coeffs[(0, j)] = y_mean[j] - offset;
        for k in 0..m {
            coeffs[(k + 1, j)] = slopes[(k, j)];
        }
    }
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Evaluates a model by walking the exponent vectors directly.
    fn brute_force(model: &PolyModel, x: &[f64]) -> f64 {
        model
            .basis()
            .exponents()
            .iter()
            .zip(model.coefficients())
            .map(|(exps, c)| {
                c * exps
                    .iter()
                    .zip(x)
                    .map(|(&e, &v)| v.powi(e as i32))
                    .product::<f64>()
            })
            .sum()
    }

    fn random_model(rng: &mut ChaCha8Rng, degree: u32) -> PolyModel {
        let n = coefficient_count(FEATURE_DIM, degree);
        let coeffs = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        PolyModel::from_coefficients(Target::Pg, degree, coeffs, Normalizers::default()).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|_| rng.random_range(0.0..1.0))
    }

    fn mono(pairs: &[(usize, u8)]) -> [u8; FEATURE_DIM] {
        let mut e = [0u8; FEATURE_DIM];
        for &(v, p) in pairs {
            e[v] = p;
        }
        e
    }

    #[test]
    fn basis_sizes_and_order() {
        assert_eq!(Basis::new(5).len(), 3003);
        assert_eq!(Basis::new(3).len(), 286);
        assert_eq!(coefficient_count(10, 5), 3003);
        let b = Basis::new(2);
        assert_eq!(b.exponents()[0], [0; FEATURE_DIM]);
        assert_eq!(b.exponents()[1], mono(&[(0, 1)]));
        assert_eq!(b.exponents()[10], mono(&[(9, 1)]));
        assert_eq!(b.exponents()[11], mono(&[(0, 2)]));
        assert_eq!(b.exponents()[12], mono(&[(0, 1), (1, 1)]));
        assert_eq!(*b.exponents().last().unwrap(), mono(&[(9, 2)]));
    }

    #[test]
    fn zero_and_constant_models() {
        let fv = [0.3; FEATURE_DIM];
        let zero = PolyModel::zero(Target::Eg, 5, Normalizers::default());
        assert_eq!(zero.predict(&fv).unwrap(), 0.0);
        assert_eq!(zero.grad_wb(&fv).unwrap(), (0.0, 0.0));
        let mut coeffs = vec![0.0; 286];
        coeffs[0] = 0.5;
        let half =
            PolyModel::from_coefficients(Target::Pg, 3, coeffs, Normalizers::default()).unwrap();
        assert_eq!(half.predict(&[0.9; FEATURE_DIM]).unwrap(), 0.5);
        assert_eq!(half.grad_wb(&fv).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let m = PolyModel::zero(Target::Pg, 3, Normalizers::default());
        assert!(matches!(
            m.predict(&[0.0; 9]),
            Err(Error::Dimension {
                expected: 10,
                got: 9
            })
        ));
        assert!(m.grad_wb(&[0.0; 11]).is_err());
    }

    #[test]
    fn product_rule_on_wb_monomial() {
        let basis = Basis::new(3);
        let mut coeffs = vec![0.0; basis.len()];
        coeffs[basis
            .index_of(&mono(&[(W_INDEX, 1), (B_INDEX, 1)]))
            .unwrap()] = 1.0;
        let m =
            PolyModel::from_coefficients(Target::Pg, 3, coeffs, Normalizers::default()).unwrap();
        let mut fv = [0.0; FEATURE_DIM];
        fv[W_INDEX] = 0.5;
        fv[B_INDEX] = 0.25;
        assert_eq!(m.grad_wb(&fv).unwrap(), (0.25, 0.5));
    }

    #[test]
    fn predict_matches_monomial_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let m = random_model(&mut rng, 5);
            let x = random_point(&mut rng);
            let (fast, slow) = (m.predict(&x).unwrap(), brute_force(&m, &x));
            assert!(
                (fast - slow).abs() <= 1e-12 * slow.abs().max(1.0),
                "{fast} vs {slow}"
            );
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-5;
        for _ in 0..20 {
            let m = random_model(&mut rng, 5);
            let x = random_point(&mut rng);
            let (gw, gb) = m.grad_wb(&x).unwrap();
            let fd = |idx: usize| {
                let (mut up, mut dn) = (x, x);
                up[idx] += h;
                dn[idx] -= h;
                (brute_force(&m, &up) - brute_force(&m, &dn)) / (2.0 * h)
            };
            for (analytic, numeric) in [(gw, fd(W_INDEX)), (gb, fd(B_INDEX))] {
                assert!(
                    (analytic - numeric).abs() <= 1e-6 * numeric.abs().max(1.0),
                    "{analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn restriction_matches_full_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(&mut rng, 5);
        let x = random_point(&mut rng);
        let fv = FeatureVector(x);
        let wb = m.restrict_to_wb(&fv.context());
        let full = m.predict(&x).unwrap();
        assert!((wb.value(x[W_INDEX], x[B_INDEX]) - full).abs() <= 1e-11 * full.abs().max(1.0));
        let (gw, gb) = m.grad_wb(&x).unwrap();
        let (rw, rb) = wb.gradient(x[W_INDEX], x[B_INDEX]);
        assert!((gw - rw).abs() <= 1e-10 * gw.abs().max(1.0));
        assert!((gb - rb).abs() <= 1e-10 * gb.abs().max(1.0));
    }

    #[test]
    fn predict_is_linear_in_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (m1, m2) = (random_model(&mut rng, 3), random_model(&mut rng, 3));
        let (a, b) = (0.7, -1.3);
        let mix = m1.combine(a, &m2, b).unwrap();
        for _ in 0..10 {
            let x = random_point(&mut rng);
            let lhs = mix.predict(&x).unwrap();
            let rhs = a * m1.predict(&x).unwrap() + b * m2.predict(&x).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }

    fn planted_dataset(
        rng: &mut ChaCha8Rng,
        n: usize,
        f: impl Fn(&[f64; FEATURE_DIM]) -> (f64, f64),
    ) -> Dataset {
        let rows = (0..n)
            .map(|_| {
                let x = random_point(rng);
                let (pg, eg) = f(&x);
                DataRow {
                    fv: FeatureVector(x),
                    pg,
                    eg,
                }
            })
            .collect();
        Dataset { rows }
    }

    #[test]
    fn recovers_planted_quadratic_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Planted degree-2 polynomials.
        let pg = |x: &[f64; FEATURE_DIM]| 0.3 + 0.5 * x[0] - 0.2 * x[3] * x[8] + 0.7 * x[9] * x[9];
        let eg = |x: &[f64; FEATURE_DIM]| -0.1 + x[1] * x[2] + 0.25 * x[8];
        let data = planted_dataset(&mut rng, 600, |x| (pg(x), eg(x)));
        let out = fit(&data, 3, 0.0, Normalizers::default()).unwrap();
        assert!(
            out.rmse_pg < 1e-8 && out.rmse_eg < 1e-8,
            "{} {}",
            out.rmse_pg,
            out.rmse_eg
        );

        let basis = Basis::new(3);
        let mut expected_pg = vec![0.0; basis.len()];
        expected_pg[0] = 0.3;
        expected_pg[basis.index_of(&mono(&[(0, 1)])).unwrap()] = 0.5;
        expected_pg[basis.index_of(&mono(&[(3, 1), (8, 1)])).unwrap()] = -0.2;
        expected_pg[basis.index_of(&mono(&[(9, 2)])).unwrap()] = 0.7;
        let mut expected_eg = vec![0.0; basis.len()];
        expected_eg[0] = -0.1;
        expected_eg[basis.index_of(&mono(&[(1, 1), (2, 1)])).unwrap()] = 1.0;
        expected_eg[basis.index_of(&mono(&[(8, 1)])).unwrap()] = 0.25;
        for (got, want) in out
            .pg
            .coefficients()
            .iter()
            .zip(&expected_pg)
            .chain(out.eg.coefficients().iter().zip(&expected_eg))
        {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn constant_target_is_fit_by_the_intercept() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = planted_dataset(&mut rng, 400, |_| (0.42, -0.3));
        for degree in [3, 5] {
            let out = fit(&data, degree, DEFAULT_RIDGE, Normalizers::default()).unwrap();
            assert!((out.pg.coefficients()[0] - 0.42).abs() < 1e-12);
            assert!(out.pg.coefficients()[1..].iter().all(|c| c.abs() < 1e-12));
            let x = random_point(&mut rng);
            assert!((out.eg.predict(&x).unwrap() + 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_exact_fit_asks_for_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut data = planted_dataset(&mut rng, 400, |x| (x[0], x[1]));
        // Feature 7 is a copy of feature 6, so their monomials are collinear.
        for row in &mut data.rows {
            row.fv.0[7] = row.fv.0[6];
        }
        assert!(matches!(
            fit(&data, 3, 0.0, Normalizers::default()),
            Err(Error::Singular(_))
        ));
        assert!(fit(&data, 3, 1e-3, Normalizers::default()).is_ok());
        let small = planted_dataset(&mut rng, 50, |x| (x[0], x[1]));
        assert!(matches!(
            fit(&small, 3, 0.0, Normalizers::default()),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn dual_and_primal_ridge_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = |x: &[f64; FEATURE_DIM]| ((x[0] * 3.0).sin() + x[8] * x[9], (x[1] - x[9]).powi(2));
        let data = planted_dataset(&mut rng, 300, f);
        // 300 rows < 3002 slopes at degree 5: dual route. Duplicating rows
        // scales the data term, so compare against a primal fit at twice the
        // ridge on a problem that is large enough for the primal route.
        let dual = fit(&data, 5, 1e-2, Normalizers::default()).unwrap();
        let mut doubled = data.clone();
        for _ in 0..10 {
            doubled.rows.extend_from_slice(&data.rows);
        }
        let primal = fit(&doubled, 5, 1e-2 * 11.0, Normalizers::default()).unwrap();
        for (a, b) in dual.pg.coefficients().iter().zip(primal.pg.coefficients()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn higher_degree_fits_at_least_as_well() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f =
            |x: &[f64; FEATURE_DIM]| ((x[0] * 4.0).sin() * x[8], (x[9] * 5.0).cos() + x[2].powi(4));
        let data = planted_dataset(&mut rng, 4000, f);
        let d3 = fit(&data, 3, DEFAULT_RIDGE, Normalizers::default()).unwrap();
        let d5 = fit(&data, 5, DEFAULT_RIDGE, Normalizers::default()).unwrap();
        assert!(d5.rmse_pg <= d3.rmse_pg && d5.rmse_eg <= d3.rmse_eg);
    }

    #[test]
    fn training_error_grows_with_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let f = |x: &[f64; FEATURE_DIM]| (x[0] * x[8] + (x[9] * 3.0).sin(), x[1]);
        let data = planted_dataset(&mut rng, 500, f);
        let mut last = 0.0;
        for ridge in [1e-6, 1e-4, 1e-2, 1.0, 100.0] {
            let out = fit(&data, 3, ridge, Normalizers::default()).unwrap();
            assert!(
                out.rmse_pg >= last - 1e-12,
                "ridge {ridge}: {} < {last}",
                out.rmse_pg
            );
            last = out.rmse_pg;
        }
    }

    #[test]
    fn model_file_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_model(&mut rng, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = PolyModel::load(&path).unwrap();
        assert_eq!(back.coefficients(), m.coefficients());
        let x = random_point(&mut rng);
        assert_eq!(
            back.predict(&x).unwrap().to_bits(),
            m.predict(&x).unwrap().to_bits()
        );
    }

    #[test]
    fn corrupt_model_files_are_rejected() {
        let m = PolyModel::zero(Target::Pg, 3, Normalizers::default());
        let mut file = m.to_file();
        file.coefficients.pop();
        assert!(PolyModel::from_file(file).is_err());
        let mut file = m.to_file();
        file.dimension = 9;
        assert!(matches!(
            PolyModel::from_file(file),
            Err(Error::Dimension { .. })
        ));
        let mut file = m.to_file();
        file.monomial_order = "lex".into();
        assert!(PolyModel::from_file(file).is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = planted_dataset(&mut rng, 20, |x| (x[0] - 0.5, x[1] * 1e-7));
        assert_eq!(Dataset::from_csv(&data.to_csv()).unwrap(), data);
    }
}
