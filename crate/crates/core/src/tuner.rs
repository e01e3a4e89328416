//! Reward and projected momentum gradient ascent over `(W, B)`.
//!
//! The ascent runs on the normalized pair `w = W / 120`, `b = B / 80` with the
//! trace context held fixed, so each model is first collapsed to a bivariate
//! polynomial. Iterates are projected onto the feasible region
//! `[1/120, 1] x [1/80, 1]` intersected with `B <= W` (`b <= 1.5 w`).
//!
//! The reward is measured in units of its range over a coarse grid of the
//! feasible region, so the returned configuration does not change when both
//! models are scaled by a positive constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_feature_vector, FeatureVector, Normalizers, RawFeatures};
use crate::poly::{PolyModel, Target, WbPolynomial};
use crate::sim::{ControllerConfig, IntervalPolicy};

const W_MAX: f64 = ControllerConfig::MAX_WAIT_BUFFER as f64;
const B_MAX: f64 = ControllerConfig::MAX_BATCH as f64;
/// Ascent stops after this many consecutive iterations below `tol`.
const PATIENCE: usize = 5;
const SNAP: f64 = 1e-9;
/// Points per axis, minus one, of the grid that sets the reward scale.
const SCALE_GRID: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunerParams {
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Also start from the four corners of the feasible region and keep the
    /// best result.
    pub multi_start: bool,
}

impl Default for TunerParams {
    fn default() -> Self {
        TunerParams {
            alpha: 0.1,
            beta: 0.9,
            learning_rate: 0.01,
            momentum: 0.9,
            max_iters: 500,
            tol: 1e-6,
            multi_start: false,
        }
    }
}

impl TunerParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(format!("tuner: {m}")));
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return bad("alpha and beta must lie in [0, 1]");
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-9 {
            return bad("alpha + beta must equal 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return bad("tol must be non-negative");
        }
        Ok(())
    }
}

pub fn reward(pg: f64, eg: f64, params: &TunerParams) -> f64 {
    params.alpha * pg + params.beta * eg
}

/// Result of one optimization, with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub config: ControllerConfig,
    /// Model reward at `config`.
    pub reward: f64,
    /// Continuous optimum in normalized coordinates.
    pub continuous: (f64, f64),
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Tuner {
    pg: PolyModel,
    eg: PolyModel,
    params: TunerParams,
}

impl Tuner {
    pub fn new(pg: PolyModel, eg: PolyModel, params: TunerParams) -> Result<Self> {
        params.validate()?;
        if pg.target() != Target::Pg || eg.target() != Target::Eg {
            return Err(Error::Model(
                "tuner needs a PG model and an EG model".into(),
            ));
        }
        if pg.normalizers() != eg.normalizers() {
            return Err(Error::Model(
                "PG and EG models were trained with different normalizers".into(),
            ));
        }
        Ok(Tuner { pg, eg, params })
    }

    pub fn params(&self) -> &TunerParams {
        &self.params
    }

    pub fn normalizers(&self) -> &Normalizers {
        self.pg.normalizers()
    }

    pub fn models(&self) -> (&PolyModel, &PolyModel) {
        (&self.pg, &self.eg)
    }

    /// Model reward of `config` in the context of `raw`.
    pub fn predicted_reward(&self, raw: &RawFeatures, config: ControllerConfig) -> Result<f64> {
        let fv = build_feature_vector(raw, config, self.normalizers());
        Ok(reward(
            self.pg.predict(fv.as_slice())?,
            self.eg.predict(fv.as_slice())?,
            &self.params,
        ))
    }

    pub fn optimize(
        &self,
        raw: &RawFeatures,
        current: ControllerConfig,
    ) -> Result<ControllerConfig> {
        Ok(self.optimize_detailed(raw, current)?.config)
    }

    pub fn optimize_detailed(
        &self,
        raw: &RawFeatures,
        current: ControllerConfig,
    ) -> Result<Outcome> {
        let fv = build_feature_vector(raw, current, self.normalizers());
        self.optimize_context(&fv, current)
    }

    /// Optimizes with the trace components of `fv` held fixed.
    pub fn optimize_context(
        &self,
        fv: &FeatureVector,
        current: ControllerConfig,
    ) -> Result<Outcome> {
        let context = fv.context();
        let pg = self.pg.restrict_to_wb(&context);
        let eg = self.eg.restrict_to_wb(&context);
        let surface = Surface::new(&pg, &eg, &self.params);

        let mut best = self.ascend(&surface, current)?;
        if self.params.multi_start {
            for (w, b) in [(1, 1), (120, 1), (120, 80), (80, 80)] {
                let start = ControllerConfig::new(w, b).expect("corner is valid");
                let candidate = self.ascend(&surface, start)?;
                if better(candidate.reward, candidate.config, best.reward, best.config) {
                    best = candidate;
                }
            }
        }
        Ok(best)
    }

    fn ascend(&self, s: &Surface<'_>, start: ControllerConfig) -> Result<Outcome> {
        let p = &self.params;
        let mut x = (
            start.wait_buffer() as f64 / W_MAX,
            start.batch() as f64 / B_MAX,
        );
        let mut v = (0.0, 0.0);
        let mut iterations = 0;
        s.gradient(x)?;
        if s.scale > 0.0 {
            let mut r = s.reward(x);
            let mut quiet = 0;
            while iterations < p.max_iters {
                iterations += 1;
                let g = s.gradient(x)?;
                v = (
                    p.momentum * v.0 + p.learning_rate * g.0 / s.scale,
                    p.momentum * v.1 + p.learning_rate * g.1 / s.scale,
                );
                let next = project((x.0 + v.0, x.1 + v.1));
                // Momentum keeps only the displacement that survived projection.
                v = (next.0 - x.0, next.1 - x.1);
                x = next;
                let r_next = s.reward(x);
                quiet = if ((r_next - r) / s.scale).abs() < p.tol {
                    quiet + 1
                } else {
                    0
                };
                r = r_next;
                if quiet >= PATIENCE {
                    break;
                }
            }
        }
        let (config, reward) = s.best_neighbor(x);
        Ok(Outcome {
            config,
            reward: reward + s.offset,
            continuous: x,
            iterations,
        })
    }
}

impl IntervalPolicy for Tuner {
    fn next_config(
        &self,
        raw: &RawFeatures,
        current: ControllerConfig,
    ) -> Result<ControllerConfig> {
        self.optimize(raw, current)
    }
}

struct Surface<'a> {
    pg: &'a WbPolynomial,
    eg: &'a WbPolynomial,
    /// Reward without its constant term, which cannot affect the argmax.
    reward: WbPolynomial,
    offset: f64,
    /// Range of the reward over [`SCALE_GRID`] feasible points.
    scale: f64,
}

impl<'a> Surface<'a> {
    fn new(pg: &'a WbPolynomial, eg: &'a WbPolynomial, params: &TunerParams) -> Self {
        let reward = pg.combine(params.alpha, eg, params.beta);
        let offset = reward.constant();
        let reward = reward.without_constant();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..=SCALE_GRID {
            for j in 0..=SCALE_GRID {
                let x = project((i as f64 / SCALE_GRID as f64, j as f64 / SCALE_GRID as f64));
                let r = reward.value(x.0, x.1);
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        let scale = if (hi - lo).is_finite() { hi - lo } else { 0.0 };
        Surface {
            pg,
            eg,
            reward,
            offset,
            scale,
        }
    }

    fn reward(&self, x: (f64, f64)) -> f64 {
        self.reward.value(x.0, x.1)
    }

    fn gradient(&self, x: (f64, f64)) -> Result<(f64, f64)> {
        for (poly, target) in [(self.pg, Target::Pg), (self.eg, Target::Eg)] {
            let g = poly.gradient(x.0, x.1);
            if !(g.0.is_finite() && g.1.is_finite()) {
                return Err(Error::NonFiniteGradient(target));
            }
        }
        Ok(self.reward.gradient(x.0, x.1))
    }

    /// Highest-reward integer configuration among the rounding neighbours of
    /// `x`, with `B` clamped to `W`.
    fn best_neighbor(&self, x: (f64, f64)) -> (ControllerConfig, f64) {
        let (w_lo, w_hi) = bracket(x.0 * W_MAX, W_MAX);
        let (b_lo, b_hi) = bracket(x.1 * B_MAX, B_MAX);
        let mut best: Option<(ControllerConfig, f64)> = None;
        for w in [w_lo, w_hi] {
            for b in [b_lo, b_hi] {
                let config =
                    ControllerConfig::new(w, b.min(w)).expect("bracketed values are in range");
                let r = self.reward(normalized(config));
                if best.is_none_or(|(c, br)| better(r, config, br, c)) {
                    best = Some((config, r));
                }
            }
        }
        best.expect("four candidates")
    }
}

fn normalized(c: ControllerConfig) -> (f64, f64) {
    (c.wait_buffer() as f64 / W_MAX, c.batch() as f64 / B_MAX)
}

/// Floor and ceiling of `v` in `[1, max]`, snapping values within rounding
/// error of an integer.
fn bracket(v: f64, max: f64) -> (u32, u32) {
    let v = if (v - v.round()).abs() < SNAP {
        v.round()
    } else {
        v
    };
    (
        v.floor().clamp(1.0, max) as u32,
        v.ceil().clamp(1.0, max) as u32,
    )
}

/// Higher reward wins; exact ties go to the smaller area, then smaller `W`.
fn better(r: f64, c: ControllerConfig, best_r: f64, best_c: ControllerConfig) -> bool {
    if r != best_r {
        return r > best_r;
    }
    (c.area(), c.wait_buffer()) < (best_c.area(), best_c.wait_buffer())
}

fn project(x: (f64, f64)) -> (f64, f64) {
    let (w_min, b_min) = (1.0 / W_MAX, 1.0 / B_MAX);
    let ratio = W_MAX / B_MAX;
    let (mut w, mut b) = (x.0.clamp(w_min, 1.0), x.1.clamp(b_min, 1.0));
    if b > ratio * w {
        // Orthogonal projection onto the line b = ratio * w.
        let t = (w + ratio * b) / (1.0 + ratio * ratio);
        w = t.clamp(w_min, 1.0);
        b = (ratio * w).clamp(b_min, 1.0);
    }
    (w, b)
}
