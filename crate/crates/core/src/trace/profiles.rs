//! Named synthetic profiles emulating the access patterns of typical edge
//! workloads: biomedical kernels (compressed sensing, feature extraction,
//! decision trees), dense linear algebra, and two generic server benchmarks.
//! `t1`..`t3` are the stages of a staged healthcare pipeline: a read-only
//! sensing stage, a convolution-heavy scheduling stage and an MM/DT-like
//! inference stage.

use super::SyntheticProfile;

pub const PROFILE_NAMES: &[&str] = &[
    "cs", "fe", "dt", "dt_c", "fe_dt", "mm", "conv", "sysbench", "apache", "t1", "t2", "t3",
];

/// Profiles used by the default training pipeline.
pub const TRAINING_PROFILES: &[&str] = &["cs", "fe", "dt", "mm", "conv", "sysbench", "apache"];

#[allow(clippy::too_many_arguments)]
const fn p(
    read_fraction: f64,
    read_locality: f64,
    write_locality: f64,
    mean_read_burst: f64,
    mean_write_burst: f64,
    hot_set_size: usize,
    bit_change_spread: f64,
    seed: u64,
) -> SyntheticProfile {
    SyntheticProfile {
        read_fraction,
        read_locality,
        write_locality,
        mean_read_burst,
        mean_write_burst,
        hot_set_size,
        bit_change_spread,
        address_space_size: 1 << 24,
        length: 10_000,
        seed,
    }
}

pub fn profile(name: &str) -> Option<SyntheticProfile> {
    let profile = match name {
        // Low locality, few reads: close to the random-address assumption.
        "cs" => p(0.10, 0.05, 0.10, 1.2, 10.8, 96, 0.9, 101),
        "fe" => p(0.20, 0.10, 0.15, 1.5, 6.0, 80, 0.8, 102),
        // Long bursts and heavy repetition over a small working set.
        "dt" => p(0.45, 0.55, 0.70, 8.0, 9.8, 24, 0.2, 103),
        "dt_c" => p(0.20, 0.30, 0.60, 2.0, 8.0, 40, 0.2, 104),
        "fe_dt" => p(0.35, 0.30, 0.45, 4.0, 7.4, 48, 0.5, 105),
        // Balanced reads and writes with almost no reuse.
        "mm" => p(0.50, 0.10, 0.05, 2.0, 2.0, 256, 1.0, 106),
        // Balanced, with reuse spread over a large working set.
        "conv" => p(0.50, 0.60, 0.65, 3.0, 3.0, 100, 0.7, 107),
        "sysbench" => p(0.40, 0.80, 0.80, 4.0, 6.0, 16, 0.6, 108),
        "apache" => p(0.30, 0.20, 0.20, 2.0, 4.7, 128, 0.9, 109),
        "t1" => p(1.00, 0.30, 0.0, 64.0, 1.0, 64, 1.0, 110),
        "t2" => p(0.50, 0.60, 0.65, 3.0, 3.0, 100, 0.7, 111),
        "t3" => p(0.45, 0.35, 0.50, 5.0, 6.1, 32, 0.4, 112),
        _ => return None,
    };
    Some(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_named_profile_is_valid() {
        for name in PROFILE_NAMES {
            profile(name).unwrap().validate().unwrap();
        }
        for name in TRAINING_PROFILES {
            assert!(PROFILE_NAMES.contains(name));
        }
        assert!(profile("nope").is_none());
    }
}
