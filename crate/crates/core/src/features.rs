//! Per-interval trace features and the normalized 10-D feature vector.
//!
//! Definitions over a window of accesses:
//!
//! - `rw_ratio`: reads / accesses.
//! - `read_locality`: `1 - unique read addresses / reads` (0 when all reads
//!   are distinct, approaching 1 when they all hit one address).
//! - `mean_read_burst`: mean length of maximal runs of consecutive reads.
//! - `mean_read_rep`: reads / unique read addresses.
//! - the write counterparts of the three above.
//! - `bit_change_variation`: coefficient of variation, across the 32 bit
//!   positions, of how often each bit toggles between consecutive writes to
//!   the same address.
//!
//! Read features are zero in a window without reads, and likewise for writes.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::ControllerConfig;
use crate::trace::MemoryAccess;

pub const FEATURE_DIM: usize = 10;
/// Position of the normalized Wait Buffer size in a [`FeatureVector`].
pub const W_INDEX: usize = 8;
/// Position of the normalized batch size in a [`FeatureVector`].
pub const B_INDEX: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RawFeatures {
    pub rw_ratio: f64,
    pub read_locality: f64,
    pub write_locality: f64,
    pub mean_read_burst: f64,
    pub mean_write_burst: f64,
    pub mean_read_rep: f64,
    pub mean_write_rep: f64,
    pub bit_change_variation: f64,
}

/// Fixed scales mapping raw features into `[0, 1]`. Persisted with every
/// model so training and inference normalize identically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub burst_scale: f64,
    pub rep_scale: f64,
    pub variation_cap: f64,
    pub max_wait_buffer: f64,
    pub max_batch: f64,
}

impl Normalizers {
    /// Bursts and repetitions are bounded by the interval length.
    pub fn for_interval(interval: usize) -> Self {
        Normalizers {
            burst_scale: interval as f64,
            rep_scale: interval as f64,
            variation_cap: 1.0,
            max_wait_buffer: ControllerConfig::MAX_WAIT_BUFFER as f64,
            max_batch: ControllerConfig::MAX_BATCH as f64,
        }
    }
}

impl Default for Normalizers {
    fn default() -> Self {
        Normalizers::for_interval(1000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The eight trace components, without `(w, b)`.
    pub fn context(&self) -> [f64; 8] {
        let mut c = [0.0; 8];
        c.copy_from_slice(&self.0[..8]);
        c
    }

    pub fn with_wb(mut self, w: f64, b: f64) -> Self {
        self.0[W_INDEX] = w;
        self.0[B_INDEX] = b;
        self
    }
}

pub fn extract_features(window: &[MemoryAccess]) -> Result<RawFeatures> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let mut reads = 0usize;
    let mut writes = 0usize;
    let mut read_addrs = HashSet::new();
    let mut write_addrs = HashSet::new();
    let (mut read_runs, mut write_runs) = (0usize, 0usize);
    let mut prev_read: Option<bool> = None;
    let mut last_written: HashMap<u64, u32> = HashMap::new();
    let mut toggles = [0u64; 32];

    for access in window {
        let is_read = access.is_read();
        if prev_read != Some(is_read) {
            if is_read {
                read_runs += 1;
            } else {
                write_runs += 1;
            }
            prev_read = Some(is_read);
        }
        match *access {
            MemoryAccess::Read { address } => {
                reads += 1;
                read_addrs.insert(address);
            }
            MemoryAccess::Write { address, data } => {
                writes += 1;
                write_addrs.insert(address);
                if let Some(prev) = last_written.insert(address, data) {
                    let mut diff = prev ^ data;
                    while diff != 0 {
                        toggles[diff.trailing_zeros() as usize] += 1;
                        diff &= diff - 1;
                    }
                }
            }
        }
    }

    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let locality = |unique: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            1.0 - unique as f64 / total as f64
        }
    };
    Ok(RawFeatures {
        rw_ratio: ratio(reads, window.len()),
        read_locality: locality(read_addrs.len(), reads),
        write_locality: locality(write_addrs.len(), writes),
        mean_read_burst: ratio(reads, read_runs),
        mean_write_burst: ratio(writes, write_runs),
        mean_read_rep: ratio(reads, read_addrs.len()),
        mean_write_rep: ratio(writes, write_addrs.len()),
        bit_change_variation: coefficient_of_variation(&toggles),
    })
}

fn coefficient_of_variation(counts: &[u64; 32]) -> f64 {
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = counts
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    var.sqrt() / mean
}

pub fn build_feature_vector(
    raw: &RawFeatures,
    config: ControllerConfig,
    norms: &Normalizers,
) -> FeatureVector {
    let unit = |v: f64| v.clamp(0.0, 1.0);
    FeatureVector([
        unit(raw.rw_ratio),
        unit(raw.read_locality),
        unit(raw.write_locality),
        unit(raw.mean_read_burst / norms.burst_scale),
        unit(raw.mean_write_burst / norms.burst_scale),
        unit(raw.mean_read_rep / norms.rep_scale),
        unit(raw.mean_write_rep / norms.rep_scale),
        unit(raw.bit_change_variation / norms.variation_cap),
        config.wait_buffer() as f64 / norms.max_wait_buffer,
        config.batch() as f64 / norms.max_batch,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::MemoryAccess as A;
    use proptest::prelude::*;

    /// Quadratic recount that shares no code with `extract_features`.
    fn naive(window: &[A]) -> RawFeatures {
        let n = window.len();
        let is_read: Vec<bool> = window.iter().map(|a| a.is_read()).collect();
        let count = |want: bool| is_read.iter().filter(|&&r| r == want).count();
        let unique = |want: bool| {
            (0..n)
                .filter(|&i| is_read[i] == want)
                .filter(|&i| {
                    !(0..i)
                        .any(|j| is_read[j] == want && window[j].address() == window[i].address())
                })
                .count()
        };
        let runs = |want: bool| {
            (0..n)
                .filter(|&i| is_read[i] == want && (i == 0 || is_read[i - 1] != want))
                .count()
        };
        let (r, w) = (count(true), count(false));
        let (ur, uw) = (unique(true), unique(false));
        let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };

        let mut per_bit = [0f64; 32];
        for i in 0..n {
            let A::Write { address, data } = window[i] else {
                continue;
            };
            let prev = (0..i).rev().find_map(|j| match window[j] {
                A::Write {
                    address: a,
                    data: d,
                } if a == address => Some(d),
                _ => None,
            });
            if let Some(prev) = prev {
                for (bit, slot) in per_bit.iter_mut().enumerate() {
                    if (prev >> bit) & 1 != (data >> bit) & 1 {
                        *slot += 1.0;
                    }
                }
            }
        }
        let mean = per_bit.iter().sum::<f64>() / 32.0;
        let cv = if mean == 0.0 {
            0.0
        } else {
            (per_bit.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / 32.0).sqrt() / mean
        };
        RawFeatures {
            rw_ratio: div(r, n),
            read_locality: if r == 0 { 0.0 } else { 1.0 - div(ur, r) },
            write_locality: if w == 0 { 0.0 } else { 1.0 - div(uw, w) },
            mean_read_burst: div(r, runs(true)),
            mean_write_burst: div(w, runs(false)),
            mean_read_rep: div(r, ur),
            mean_write_rep: div(w, uw),
            bit_change_variation: cv,
        }
    }

    fn close(a: &RawFeatures, b: &RawFeatures) -> bool {
        let (x, y) = (features_array(a), features_array(b));
        x.iter()
            .zip(&y)
            .all(|(p, q)| (p - q).abs() <= 1e-12 * (1.0 + q.abs()))
    }

    fn features_array(f: &RawFeatures) -> [f64; 8] {
        [
            f.rw_ratio,
            f.read_locality,
            f.write_locality,
            f.mean_read_burst,
            f.mean_write_burst,
            f.mean_read_rep,
            f.mean_write_rep,
            f.bit_change_variation,
        ]
    }

    #[test]
    fn distinct_reads() {
        let window: Vec<A> = (0..10).map(A::read).collect();
        let f = extract_features(&window).unwrap();
        assert_eq!(f.rw_ratio, 1.0);
        assert_eq!(f.read_locality, 0.0);
        assert_eq!(f.mean_read_burst, 10.0);
        assert_eq!(f.mean_read_rep, 1.0);
        assert_eq!(
            (
                f.write_locality,
                f.mean_write_burst,
                f.mean_write_rep,
                f.bit_change_variation
            ),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn short_mixed_window() {
        let (a, b) = (0xA, 0xB);
        let window = [A::read(a), A::read(a), A::write(b, 1), A::read(a)];
        let f = extract_features(&window).unwrap();
        assert_eq!(f.rw_ratio, 0.75);
        assert!((f.read_locality - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.mean_read_burst, 1.5);
        assert_eq!(f.mean_write_burst, 1.0);
        assert_eq!(f.mean_read_rep, 3.0);
        assert!(close(&f, &naive(&window)));
    }

    #[test]
    fn low_nibble_toggles() {
        let n = 9;
        let window: Vec<A> = (0..n)
            .map(|i| A::write(0x40, if i % 2 == 0 { 0x0 } else { 0xF }))
            .collect();
        let f = extract_features(&window).unwrap();
        // Bits 0-3 toggle n-1 times, bits 4-31 never.
        let mut counts = [0f64; 32];
        counts[..4].fill((n - 1) as f64);
        let mean = counts.iter().sum::<f64>() / 32.0;
        let sd = (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 32.0).sqrt();
        assert!((f.bit_change_variation - sd / mean).abs() < 1e-12);
        assert!((f.bit_change_variation - 7f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_window_is_an_error() {
        assert!(matches!(extract_features(&[]), Err(Error::EmptyWindow)));
    }

    #[test]
    fn feature_vector_bounds() {
        let norms = Normalizers::default();
        let raw = RawFeatures::default();
        let fv = build_feature_vector(&raw, ControllerConfig::new(120, 80).unwrap(), &norms);
        assert_eq!((fv.0[8], fv.0[9]), (1.0, 1.0));
        let fv = build_feature_vector(&raw, ControllerConfig::STATIC_DEFAULT, &norms);
        assert!((fv.0[8] - 0.6667).abs() < 1e-4);
        assert_eq!(fv.0[9], 0.125);
        let fv = build_feature_vector(&raw, ControllerConfig::new(1, 1).unwrap(), &norms);
        assert_eq!(fv.0[..8], [0.0; 8]);
        assert_eq!((fv.0[8], fv.0[9]), (1.0 / 120.0, 1.0 / 80.0));
    }

    #[test]
    fn large_raw_values_are_clamped() {
        let raw = RawFeatures {
            mean_read_burst: 5000.0,
            mean_write_rep: 2000.0,
            bit_change_variation: 5.0,
            ..Default::default()
        };
        let fv = build_feature_vector(
            &raw,
            ControllerConfig::STATIC_DEFAULT,
            &Normalizers::default(),
        );
        assert!(fv.0.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!((fv.0[3], fv.0[6], fv.0[7]), (1.0, 1.0, 1.0));
    }

    fn window_strategy() -> impl Strategy<Value = Vec<A>> {
        let access = prop_oneof![
            (0u64..24).prop_map(A::read),
            (0u64..24, any::<u32>()).prop_map(|(a, d)| A::write(a, d)),
        ];
        prop::collection::vec(access, 1..200)
    }

    proptest! {
        #[test]
        fn agrees_with_recount(window in window_strategy()) {
            prop_assert!(close(&extract_features(&window).unwrap(), &naive(&window)));
        }

        #[test]
        fn address_relabeling_keeps_features(window in window_strategy(), salt in any::<u64>()) {
            // Any injective relabeling; the multiplier is odd so this is a bijection.
            let relabel = |a: u64| a.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt);
            let mapped: Vec<A> = window
                .iter()
                .map(|a| match *a {
                    A::Read { address } => A::read(relabel(address)),
                    A::Write { address, data } => A::write(relabel(address), data),
                })
                .collect();
            let (f, g) = (extract_features(&window).unwrap(), extract_features(&mapped).unwrap());
            prop_assert_eq!(f, g);
        }

        #[test]
        fn concatenated_bursts_stay_above_smaller_part(a in window_strategy(), b in window_strategy()) {
            let whole: Vec<A> = a.iter().chain(&b).copied().collect();
            let (fa, fb, fw) = (naive(&a), naive(&b), naive(&whole));
            let whole_f = extract_features(&whole).unwrap();
            prop_assert!(close(&whole_f, &fw));
            // Merging the boundary runs can only lengthen runs, so only a part
            // with no runs of a kind can pull the mean below the smaller part.
            for (x, y, z) in [
                (fa.mean_read_burst, fb.mean_read_burst, fw.mean_read_burst),
                (fa.mean_write_burst, fb.mean_write_burst, fw.mean_write_burst),
            ] {
                if x > 0.0 && y > 0.0 {
                    prop_assert!(z >= x.min(y) - 1e-12);
                }
            }
        }
    }
}
