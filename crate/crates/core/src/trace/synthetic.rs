use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AccessKind, MemoryAccess, Trace};
use crate::error::{Error, Result};

/// Target characteristics of a generated trace.
///
/// Kinds follow alternating read and write runs whose lengths are random
/// compositions (approximately geometric) with the requested means. Repeated
/// addresses are drawn from a shared hot set, so `hot_set_size` sets the
/// reuse distance a Wait Buffer must cover to absorb repeats. Every write
/// flips one bit of the address's previous value; `bit_change_spread` is the
/// probability that the flipped bit is drawn from all 32 positions instead of
/// the low nibble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub read_fraction: f64,
    pub read_locality: f64,
    pub write_locality: f64,
    pub mean_read_burst: f64,
    pub mean_write_burst: f64,
    pub hot_set_size: usize,
    pub bit_change_spread: f64,
    pub address_space_size: u64,
    pub length: usize,
    pub seed: u64,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        SyntheticProfile {
            read_fraction: 0.5,
            read_locality: 0.0,
            write_locality: 0.0,
            mean_read_burst: 2.0,
            mean_write_burst: 2.0,
            hot_set_size: 32,
            bit_change_spread: 1.0,
            address_space_size: 1 << 24,
            length: 1000,
            seed: 0,
        }
    }
}

impl SyntheticProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidProfile(what.to_owned()));
        if !(0.0..=1.0).contains(&self.read_fraction) {
            return bad("read_fraction must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.read_locality) || !(0.0..1.0).contains(&self.write_locality) {
            return bad("localities must lie in [0, 1)");
        }
        if !(self.mean_read_burst >= 1.0 && self.mean_write_burst >= 1.0) {
            return bad("mean burst sizes must be at least 1");
        }
        if self.hot_set_size == 0 {
            return bad("hot_set_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.bit_change_spread) {
            return bad("bit_change_spread must lie in [0, 1]");
        }
        if self.address_space_size == 0 || self.address_space_size > 1 << 32 {
            return bad("address_space_size must lie in [1, 2^32]");
        }
        if self.length == 0 {
            return bad("length must be at least 1");
        }
        Ok(())
    }

    pub fn with_length(mut self, length: usize) -> Self {
        self.length = length;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Generates a trace from `profile`. Identical profiles (including the seed)
/// always produce identical traces.
pub fn generate_synthetic(profile: &SyntheticProfile) -> Result<Trace> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let n = profile.length;
    let n_reads = ((profile.read_fraction * n as f64).round() as usize).min(n);
    let n_writes = n - n_reads;

    let kinds = kind_sequence(profile, n_reads, n_writes, &mut rng);

    let mut space = AddressSpace::new(profile.address_space_size, &mut rng);
    let hot: Vec<u64> = (0..profile.hot_set_size).map(|_| space.fresh()).collect();
    let write_addrs =
        assign_addresses(n_writes, profile.write_locality, &hot, &mut space, &mut rng);
    let read_addrs = assign_addresses(n_reads, profile.read_locality, &hot, &mut space, &mut rng);

    let mut last_value: HashMap<u64, u32> = HashMap::new();
    let (mut r, mut w) = (read_addrs.into_iter(), write_addrs.into_iter());
    let mut accesses = Vec::with_capacity(n);
    for kind in kinds {
        let access = match kind {
            AccessKind::Read => MemoryAccess::read(r.next().expect("read address count")),
            AccessKind::Write => {
                let address = w.next().expect("write address count");
                let bit = if rng.random::<f64>() < profile.bit_change_spread {
                    rng.random_range(0..32)
                } else {
                    rng.random_range(0..4)
                };
                let value = last_value.entry(address).or_insert(0);
                *value ^= 1 << bit;
                MemoryAccess::write(address, *value)
            }
        };
        accesses.push(access);
    }
    Ok(Trace::new("synthetic", accesses))
}

/// Concatenates one synthetic trace per stage. `stage_ends` records the
/// cumulative stage lengths.
pub fn staged_trace(stages: &[(SyntheticProfile, usize)]) -> Result<Trace> {
    if stages.is_empty() {
        return Err(Error::InvalidProfile(
            "a staged trace needs at least one stage".into(),
        ));
    }
    let mut accesses = Vec::new();
    let mut stage_ends = Vec::with_capacity(stages.len());
    for (profile, length) in stages {
        let part = generate_synthetic(&profile.with_length(*length))?;
        accesses.extend(part.accesses);
        stage_ends.push(accesses.len());
    }
    let mut trace = Trace::new("synthetic", accesses);
    trace.stage_ends = stage_ends;
    Ok(trace)
}

fn kind_sequence(
    profile: &SyntheticProfile,
    n_reads: usize,
    n_writes: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<AccessKind> {
    if n_reads == 0 {
        return vec![AccessKind::Write; n_writes];
    }
    if n_writes == 0 {
        return vec![AccessKind::Read; n_reads];
    }
    // One run count serves both kinds so the runs alternate. When the burst
    // targets disagree with the read fraction, the run count splits the
    // difference.
    let runs = (n_reads as f64 / profile.mean_read_burst
        + n_writes as f64 / profile.mean_write_burst)
        / 2.0;
    let runs = (runs.round() as usize).clamp(1, n_reads.min(n_writes));
    let read_runs = composition(n_reads, runs, rng);
    let write_runs = composition(n_writes, runs, rng);
    let read_first = rng.random::<f64>() < profile.read_fraction;

    let mut kinds = Vec::with_capacity(n_reads + n_writes);
    for (r, w) in read_runs.into_iter().zip(write_runs) {
        let (first, second) = if read_first {
            ((AccessKind::Read, r), (AccessKind::Write, w))
        } else {
            ((AccessKind::Write, w), (AccessKind::Read, r))
        };
        kinds.extend(std::iter::repeat_n(first.0, first.1));
        kinds.extend(std::iter::repeat_n(second.0, second.1));
    }
    kinds
}

/// Splits `n` into `k` positive parts with uniformly random cut points.
fn composition(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    debug_assert!(k >= 1 && k <= n);
    let mut cuts: Vec<usize> = index::sample(rng, n - 1, k - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut parts = Vec::with_capacity(k);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(n)) {
        parts.push(c - prev);
        prev = c;
    }
    parts
}

/// Walks the address space with a random stride coprime to its size, so
/// fresh addresses do not repeat until the space is exhausted.
struct AddressSpace {
    size: u64,
    offset: u64,
    stride: u64,
    next: u64,
}

impl AddressSpace {
    fn new(size: u64, rng: &mut ChaCha8Rng) -> Self {
        let stride = if size <= 2 {
            1
        } else {
            loop {
                let s = rng.random_range(1..size);
                if gcd(s, size) == 1 {
                    break s;
                }
            }
        };
        let offset = rng.random_range(0..size);
        AddressSpace {
            size,
            offset,
            stride,
            next: 0,
        }
    }

    fn fresh(&mut self) -> u64 {
        let i = self.next;
        self.next += 1;
        ((self.offset as u128 + i as u128 * self.stride as u128) % self.size as u128) as u64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Picks `count` addresses with exactly `round((1 - locality) * count)`
/// distinct values (at least one). Repeats come from the hot set; the rest are
/// fresh.
fn assign_addresses(
    count: usize,
    locality: f64,
    hot: &[u64],
    space: &mut AddressSpace,
    rng: &mut ChaCha8Rng,
) -> Vec<u64> {
    if count == 0 {
        return Vec::new();
    }
    let unique = (((1.0 - locality) * count as f64).round() as usize).clamp(1, count);
    let hot_used = hot.len().min(unique);
    let fresh = unique - hot_used;

    let mut is_fresh = vec![false; count];
    for i in index::sample(rng, count, fresh) {
        is_fresh[i] = true;
    }
    let mut first_hot: Vec<u64> = hot[..hot_used].to_vec();
    first_hot.shuffle(rng);
    let mut first_hot = first_hot.into_iter();

    is_fresh
        .into_iter()
        .map(|f| {
            if f {
                space.fresh()
            } else {
                first_hot
                    .next()
                    .unwrap_or_else(|| hot[rng.random_range(0..hot_used)])
            }
        })
        .collect()
}
