//! Shared fixtures for the criterion benchmarks.

use avac_core::features::{FeatureVector, Normalizers, FEATURE_DIM};
use avac_core::poly::{coefficient_count, DataRow, Dataset, PolyModel, Target};
use avac_core::trace::profile;
use avac_core::{generate_synthetic, Trace};

/// A named synthetic profile at the given length.
pub fn trace(name: &str, length: usize) -> Trace {
    let p = profile(name).expect("known profile").with_length(length);
    generate_synthetic(&p).expect("valid profile")
}

/// Deterministic pseudo-random values in `[0, 1)`.
fn unit_stream(seed: u64) -> impl FnMut() -> f64 {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    }
}

pub fn model(target: Target, degree: u32, seed: u64) -> PolyModel {
    let mut next = unit_stream(seed);
    let coeffs = (0..coefficient_count(FEATURE_DIM, degree))
        .map(|_| next() - 0.5)
        .collect();
    PolyModel::from_coefficients(target, degree, coeffs, Normalizers::default()).expect("sized")
}

pub fn point(seed: u64) -> [f64; FEATURE_DIM] {
    let mut next = unit_stream(seed);
    std::array::from_fn(|_| next())
}

pub fn dataset(rows: usize, seed: u64) -> Dataset {
    let mut next = unit_stream(seed);
    let rows = (0..rows)
        .map(|_| {
            let fv: [f64; FEATURE_DIM] = std::array::from_fn(|_| next());
            let pg = 0.4 + 0.3 * fv[8] * fv[9] - 0.2 * fv[0];
            let eg = 0.9 - 0.1 * fv[1] * fv[8];
            DataRow {
                fv: FeatureVector(fv),
                pg,
                eg,
            }
        })
        .collect();
    Dataset { rows }
}
