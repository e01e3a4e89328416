//! RRAM device model: stochastic switching times and per-bit energy.
//!
//! Times are in nanoseconds and energies in joules throughout the crate.
//!
//! A programming pulse drives `i_prog` at `v_prog` through each transitioning
//! cell until write termination detects the switch, so a bit that switches
//! after `t` ns costs `v_prog * i_prog * t`. Bits of a word are programmed in
//! parallel: the word is done once its slowest bit has switched and the
//! detector has fired.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Programming voltage (V).
    pub v_prog: f64,
    /// Programming current (A).
    pub i_prog: f64,
    /// Worst-case programming time (ns).
    pub t_worst: f64,
    /// Mean switching time (ns).
    pub mu: f64,
    /// Standard deviation of the switching time (ns).
    pub sigma: f64,
    /// Write-termination detection delay (ns).
    pub t_detect: f64,
    /// RRAM read energy per bit (J).
    pub e_read_bit: f64,
    /// RRAM word read latency (ns).
    pub t_read: f64,
    /// Leakage current per buffer bit cell (A).
    pub i_leak_bit: f64,
    pub word_bits: u32,
}

impl Default for DeviceParams {
    fn default() -> Self {
        DeviceParams {
            v_prog: 1.0,
            i_prog: 100e-6,
            t_worst: 50.0,
            mu: 25.0,
            sigma: 5.0,
            t_detect: 1.0,
            e_read_bit: 1e-12,
            t_read: 10.0,
            i_leak_bit: 15e-9,
            word_bits: 32,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(format!("device: {m}")));
        let finite = [
            self.v_prog,
            self.i_prog,
            self.t_worst,
            self.mu,
            self.sigma,
            self.t_detect,
            self.e_read_bit,
            self.t_read,
            self.i_leak_bit,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite");
        }
        if !(0.0 < self.mu && self.mu < self.t_worst) {
            return bad("need 0 < mu < t_worst");
        }
        if self.sigma <= 0.0 {
            return bad("sigma must be positive");
        }
        if self.t_detect < 0.0 || self.t_read < 0.0 {
            return bad("latencies must be non-negative");
        }
        if self.v_prog < 0.0 || self.i_prog < 0.0 || self.e_read_bit < 0.0 || self.i_leak_bit < 0.0
        {
            return bad("voltages, currents and energies must be non-negative");
        }
        if self.word_bits == 0 || self.word_bits > 32 {
            return bad("word_bits must lie in [1, 32]");
        }
        Ok(())
    }

    /// Leakage power of one powered buffer word-line (W).
    pub fn leakage_power_per_word(&self) -> f64 {
        self.v_prog * self.i_leak_bit * self.word_bits as f64
    }

    fn word_mask(&self) -> u32 {
        if self.word_bits >= 32 {
            u32::MAX
        } else {
            (1u32 << self.word_bits) - 1
        }
    }
}

/// Seeded generator for switching-time samples.
///
/// Independent simulations draw from independent streams of the same seed.
#[derive(Debug, Clone)]
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SimRng(rng)
    }
}

/// Time and energy of one RRAM operation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cost {
    pub time: f64,
    pub energy: f64,
}

/// Draws a switching time from Normal(mu, sigma^2) truncated to (0, t_worst].
pub fn sample_switch_time(rng: &mut SimRng, params: &DeviceParams) -> f64 {
    let normal = Normal::new(params.mu, params.sigma).expect("validated sigma");
    loop {
        let t = normal.sample(&mut rng.0);
        if t > 0.0 && t <= params.t_worst {
            return t;
        }
    }
}

/// Programs `new` over `old`, sampling one switching time per transitioning
/// bit (lowest bit first).
pub fn word_write_cost(old: u32, new: u32, rng: &mut SimRng, params: &DeviceParams) -> Cost {
    let flips = ((old ^ new) & params.word_mask()).count_ones() as usize;
    let mut times = [0.0f64; 32];
    for t in times.iter_mut().take(flips) {
        *t = sample_switch_time(rng, params);
    }
    cost_from_switch_times(&times[..flips], params)
}

/// Word cost given the switching times of its transitioning bits.
pub fn cost_from_switch_times(times: &[f64], params: &DeviceParams) -> Cost {
    let slowest = times.iter().copied().fold(0.0, f64::max);
    let energy = times
        .iter()
        .map(|t| params.v_prog * params.i_prog * t * NS)
        .sum();
    Cost {
        time: slowest + params.t_detect,
        energy,
    }
}

/// Cost of a write without write termination: every bit cell of the word is
/// driven for the full worst-case pulse.
pub fn worst_case_write_cost(params: &DeviceParams) -> Cost {
    Cost {
        time: params.t_worst,
        energy: params.v_prog * params.i_prog * params.t_worst * NS * params.word_bits as f64,
    }
}

pub fn read_cost(params: &DeviceParams) -> Cost {
    Cost {
        time: params.t_read,
        energy: params.e_read_bit * params.word_bits as f64,
    }
}

/// Leakage of `active_words` powered word-lines over `duration` ns.
pub fn leakage_energy(active_words: usize, duration: f64, params: &DeviceParams) -> f64 {
    params.leakage_power_per_word() * active_words as f64 * (duration * NS)
}
