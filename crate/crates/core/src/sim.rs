//! Controller simulation: the reference system without a controller, the
//! Wait Buffer / batch controller, and interval-by-interval runs whose
//! configuration is retuned at every interval boundary.
//!
//! The processor issues one access every `t_cpu` ns unless stalled. Under
//! the controller:
//!
//! - a write to an unlocked buffered address merges in place;
//! - a write to a new address takes a free buffer slot, stalling until a
//!   flush completes when the buffer is full;
//! - once at least `B` unlocked entries are pending and the RRAM is idle, the
//!   `B` oldest are locked and written back-to-back as one batch;
//! - a read hitting an unlocked entry is served by the buffer;
//! - a read hitting the locked batch, or missing while the RRAM is busy,
//!   waits in the Read Buffer until the flush completes, then reads the RRAM;
//! - any other read goes straight to the RRAM.
//!
//! At the end of a run the remaining entries are drained, the last batch
//! possibly shorter than `B`.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    build_feature_vector, extract_features, FeatureVector, Normalizers, RawFeatures,
};
use crate::rram::{self, DeviceParams, SimRng};
use crate::trace::{MemoryAccess, Trace};

/// The tunable pair: Wait Buffer size `W` and batch size `B`, in words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "(u32, u32)", into = "(u32, u32)")]
pub struct ControllerConfig {
    wait_buffer: u32,
    batch: u32,
}

impl ControllerConfig {
    pub const MAX_WAIT_BUFFER: u32 = 120;
    pub const MAX_BATCH: u32 = 80;
    pub const STATIC_DEFAULT: ControllerConfig = ControllerConfig {
        wait_buffer: 80,
        batch: 10,
    };

    pub fn new(wait_buffer: u32, batch: u32) -> Result<Self> {
        if !(1..=Self::MAX_WAIT_BUFFER).contains(&wait_buffer) {
            return Err(Error::InvalidConfig(format!(
                "W = {wait_buffer} outside [1, {}]",
                Self::MAX_WAIT_BUFFER
            )));
        }
        if !(1..=Self::MAX_BATCH).contains(&batch) {
            return Err(Error::InvalidConfig(format!(
                "B = {batch} outside [1, {}]",
                Self::MAX_BATCH
            )));
        }
        if batch > wait_buffer {
            return Err(Error::InvalidConfig(format!(
                "B = {batch} exceeds W = {wait_buffer}"
            )));
        }
        Ok(ControllerConfig { wait_buffer, batch })
    }

    pub fn wait_buffer(&self) -> u32 {
        self.wait_buffer
    }

    pub fn batch(&self) -> u32 {
        self.batch
    }

    /// Buffer area proxy used to break reward ties.
    pub fn area(&self) -> u32 {
        self.wait_buffer * self.batch
    }

    /// Every valid configuration, W-major.
    pub fn all() -> impl Iterator<Item = ControllerConfig> {
        (1..=Self::MAX_WAIT_BUFFER).flat_map(|w| {
            (1..=w.min(Self::MAX_BATCH)).map(move |b| ControllerConfig {
                wait_buffer: w,
                batch: b,
            })
        })
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self::STATIC_DEFAULT
    }
}

impl fmt::Display for ControllerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.wait_buffer, self.batch)
    }
}

impl TryFrom<(u32, u32)> for ControllerConfig {
    type Error = Error;
    fn try_from((w, b): (u32, u32)) -> Result<Self> {
        ControllerConfig::new(w, b)
    }
}

impl From<ControllerConfig> for (u32, u32) {
    fn from(c: ControllerConfig) -> Self {
        (c.wait_buffer, c.batch)
    }
}

/// Processor and buffer timing that is not a property of the RRAM itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Issue interval of the processor (ns).
    pub t_cpu: f64,
    /// Wait Buffer read or write latency (ns).
    pub t_buf: f64,
    /// Wait Buffer read or write energy per word (J).
    pub e_buf_word: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            t_cpu: 10.0,
            t_buf: 1.0,
            e_buf_word: 0.1e-12,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if [self.t_cpu, self.t_buf, self.e_buf_word]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::InvalidParams(
                "sim: timings and energies must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Time (ns) and energy (J) accounting of one run or interval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimMetrics {
    pub total_time: f64,
    pub stall_time: f64,
    pub rram_busy_time: f64,
    pub e_write: f64,
    pub e_read: f64,
    pub e_leak: f64,
    pub e_buffer: f64,
    pub writes_coalesced: u64,
    pub wb_read_hits: u64,
    pub wb_write_merges: u64,
    pub rram_reads: u64,
    pub batches_flushed: u64,
}

impl SimMetrics {
    pub const CSV_HEADER: &'static str =
        "total_time,stall_time,rram_busy_time,e_write,e_read,e_leak,e_buffer,\
writes_coalesced,wb_read_hits,wb_write_merges,rram_reads,batches_flushed";

    pub fn total_energy(&self) -> f64 {
        self.e_write + self.e_read + self.e_leak + self.e_buffer
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.total_time,
            self.stall_time,
            self.rram_busy_time,
            self.e_write,
            self.e_read,
            self.e_leak,
            self.e_buffer,
            self.writes_coalesced,
            self.wb_read_hits,
            self.wb_write_merges,
            self.rram_reads,
            self.batches_flushed
        )
    }

    /// Accumulation since `earlier`, a snapshot of the same run.
    pub fn since(&self, earlier: &SimMetrics) -> SimMetrics {
        SimMetrics {
            total_time: self.total_time - earlier.total_time,
            stall_time: self.stall_time - earlier.stall_time,
            rram_busy_time: self.rram_busy_time - earlier.rram_busy_time,
            e_write: self.e_write - earlier.e_write,
            e_read: self.e_read - earlier.e_read,
            e_leak: self.e_leak - earlier.e_leak,
            e_buffer: self.e_buffer - earlier.e_buffer,
            writes_coalesced: self.writes_coalesced - earlier.writes_coalesced,
            wb_read_hits: self.wb_read_hits - earlier.wb_read_hits,
            wb_write_merges: self.wb_write_merges - earlier.wb_write_merges,
            rram_reads: self.rram_reads - earlier.rram_reads,
            batches_flushed: self.batches_flushed - earlier.batches_flushed,
        }
    }

    pub fn add(&mut self, other: &SimMetrics) {
        self.total_time += other.total_time;
        self.stall_time += other.stall_time;
        self.rram_busy_time += other.rram_busy_time;
        self.e_write += other.e_write;
        self.e_read += other.e_read;
        self.e_leak += other.e_leak;
        self.e_buffer += other.e_buffer;
        self.writes_coalesced += other.writes_coalesced;
        self.wb_read_hits += other.wb_read_hits;
        self.wb_write_merges += other.wb_write_merges;
        self.rram_reads += other.rram_reads;
        self.batches_flushed += other.batches_flushed;
    }
}

/// Runs `accesses` on the system without a controller: every write is a
/// synchronous worst-case pulse on all bits, every read a plain RRAM read.
pub fn reference_metrics(
    accesses: &[MemoryAccess],
    device: &DeviceParams,
    params: &SimParams,
) -> SimMetrics {
    let write = rram::worst_case_write_cost(device);
    let read = rram::read_cost(device);
    let mut m = SimMetrics::default();
    for access in accesses {
        m.total_time += params.t_cpu;
        if access.is_read() {
            m.total_time += read.time;
            m.rram_busy_time += read.time;
            m.e_read += read.energy;
            m.rram_reads += 1;
        } else {
            m.total_time += write.time;
            m.stall_time += write.time;
            m.rram_busy_time += write.time;
            m.e_write += write.energy;
        }
    }
    m
}

/// Reference run over a whole trace. The reference system is deterministic;
/// `rng` is accepted for symmetry with [`simulate_vac`] and left untouched.
pub fn simulate_reference(
    trace: &Trace,
    device: &DeviceParams,
    params: &SimParams,
    _rng: &mut SimRng,
) -> Result<SimMetrics> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    device.validate()?;
    Ok(reference_metrics(&trace.accesses, device, params))
}

pub fn simulate_vac(
    trace: &Trace,
    config: ControllerConfig,
    device: &DeviceParams,
    params: &SimParams,
    rng: &mut SimRng,
) -> Result<SimMetrics> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut sim = VacSimulator::new(config, device, params, rng)?;
    for access in &trace.accesses {
        sim.step(*access);
    }
    sim.drain();
    Ok(sim.metrics())
}

/// Optional instrumentation of a [`VacSimulator`].
#[derive(Debug, Default, Clone)]
pub struct Probe {
    /// Value returned by every read, in trace order.
    pub read_values: Vec<u32>,
    /// Address of every word programmed into the RRAM, in flush order.
    pub rram_writes: Vec<u64>,
    /// Largest Read Buffer depth observed.
    pub max_read_queue: usize,
}

#[derive(Debug)]
struct Flush {
    end: f64,
    words: Vec<(u64, u32)>,
}

/// Event-driven state machine of the controller. Feed accesses with
/// [`step`](Self::step), finish with [`drain`](Self::drain).
#[derive(Debug)]
pub struct VacSimulator<'a> {
    config: ControllerConfig,
    device: &'a DeviceParams,
    params: &'a SimParams,
    rng: &'a mut SimRng,
    now: f64,
    metrics: SimMetrics,
    /// Unlocked entries: address -> data.
    unlocked: HashMap<u64, u32>,
    /// Unlocked addresses, oldest first.
    age: VecDeque<u64>,
    flush: Option<Flush>,
    read_queue: VecDeque<(u64, f64)>,
    rram: HashMap<u64, u32>,
    probe: Option<Probe>,
}

impl<'a> VacSimulator<'a> {
    pub fn new(
        config: ControllerConfig,
        device: &'a DeviceParams,
        params: &'a SimParams,
        rng: &'a mut SimRng,
    ) -> Result<Self> {
        device.validate()?;
        params.validate()?;
        Ok(VacSimulator {
            config,
            device,
            params,
            rng,
            now: 0.0,
            metrics: SimMetrics::default(),
            unlocked: HashMap::new(),
            age: VecDeque::new(),
            flush: None,
            read_queue: VecDeque::new(),
            rram: HashMap::new(),
            probe: None,
        })
    }

    pub fn with_probe(mut self) -> Self {
        self.probe = Some(Probe::default());
        self
    }

    pub fn probe(&self) -> Option<&Probe> {
        self.probe.as_ref()
    }

    pub fn config(&self) -> ControllerConfig {
        self.config
    }

    /// Metrics accumulated so far; `total_time` is the current clock.
    pub fn metrics(&self) -> SimMetrics {
        SimMetrics {
            total_time: self.now,
            ..self.metrics
        }
    }

    /// Last value programmed into the RRAM at `address` (0 if never written).
    pub fn rram_value(&self, address: u64) -> u32 {
        self.rram.get(&address).copied().unwrap_or(0)
    }

    /// Entries held by the buffer, locked or not.
    pub fn occupancy(&self) -> usize {
        self.unlocked.len() + self.flush.as_ref().map_or(0, |f| f.words.len())
    }

    /// Applies a new configuration. Entries already buffered stay; if they
    /// exceed the new capacity, new writes stall until flushes make room.
    pub fn reconfigure(&mut self, config: ControllerConfig) {
        self.config = config;
        self.try_lock_batch();
    }

    /// Issues one access and returns the value of a read.
    pub fn step(&mut self, access: MemoryAccess) -> Option<u32> {
        let issue = self.now + self.params.t_cpu;
        self.run_until(issue);
        match access {
            MemoryAccess::Write { address, data } => {
                self.write(address, data);
                None
            }
            MemoryAccess::Read { address } => {
                let value = self.read(address);
                if let Some(p) = self.probe.as_mut() {
                    p.read_values.push(value);
                }
                Some(value)
            }
        }
    }

    /// Flushes everything still buffered and waits for the RRAM to finish.
    pub fn drain(&mut self) {
        loop {
            if let Some(end) = self.flush.as_ref().map(|f| f.end) {
                self.run_until(end);
            } else if !self.unlocked.is_empty() {
                let n = self.unlocked.len().min(self.config.batch as usize);
                self.start_flush(n);
            } else {
                break;
            }
        }
    }

    fn write(&mut self, address: u64, data: u32) {
        if let Some(slot) = self.unlocked.get_mut(&address) {
            *slot = data;
            self.metrics.wb_write_merges += 1;
        } else {
            while self.occupancy() >= self.config.wait_buffer as usize {
                match self.flush.as_ref().map(|f| f.end) {
                    Some(end) => {
                        self.metrics.stall_time += end - self.now;
                        self.run_until(end);
                    }
                    // Only reachable right after shrinking W below the pending count.
                    None => {
                        let n = self.unlocked.len().min(self.config.batch as usize);
                        self.start_flush(n);
                    }
                }
            }
            self.unlocked.insert(address, data);
            self.age.push_back(address);
        }
        self.buffer_access();
        self.try_lock_batch();
    }

    fn read(&mut self, address: u64) -> u32 {
        if let Some(&data) = self.unlocked.get(&address) {
            self.metrics.wb_read_hits += 1;
            self.buffer_access();
            return data;
        }
        if let Some(end) = self.flush.as_ref().map(|f| f.end) {
            // Locked-batch hit or RRAM busy: queue and stall until the flush
            // lands, then serve the read before any new batch locks.
            self.read_queue.push_back((address, self.now));
            if let Some(p) = self.probe.as_mut() {
                p.max_read_queue = p.max_read_queue.max(self.read_queue.len());
            }
            self.metrics.stall_time += end - self.now;
            self.advance_clock(end);
            self.finish_flush();
            let (queued, _) = self.read_queue.pop_front().expect("queued read");
            let value = self.rram_read(queued);
            self.try_lock_batch();
            return value;
        }
        self.rram_read(address)
    }

    fn rram_read(&mut self, address: u64) -> u32 {
        let cost = rram::read_cost(self.device);
        self.metrics.e_read += cost.energy;
        self.metrics.rram_reads += 1;
        self.metrics.rram_busy_time += cost.time;
        self.advance_clock(self.now + cost.time);
        self.rram_value(address)
    }

    fn buffer_access(&mut self) {
        self.metrics.e_buffer += self.params.e_buf_word;
        self.advance_clock(self.now + self.params.t_buf);
    }

    /// Completes every flush ending by `t` (locking the next batch at each
    /// completion instant), then moves the clock to `t`.
    fn run_until(&mut self, t: f64) {
        while let Some(end) = self.flush.as_ref().map(|f| f.end).filter(|&e| e <= t) {
            self.advance_clock(end);
            self.finish_flush();
            self.try_lock_batch();
        }
        self.advance_clock(t);
    }

    /// Moves the clock forward, charging leakage for the powered word-lines.
    /// An empty buffer is fully gated.
    fn advance_clock(&mut self, t: f64) {
        if t <= self.now {
            return;
        }
        let occupied = self.occupancy();
        if occupied > 0 {
            let lines = occupied.max(self.config.wait_buffer as usize);
            self.metrics.e_leak += rram::leakage_energy(lines, t - self.now, self.device);
        }
        self.now = t;
    }

    fn try_lock_batch(&mut self) {
        if self.flush.is_none() && self.unlocked.len() >= self.config.batch as usize {
            self.start_flush(self.config.batch as usize);
        }
    }

    fn start_flush(&mut self, n: usize) {
        debug_assert!(self.flush.is_none() && n > 0 && n <= self.unlocked.len());
        let mut words = Vec::with_capacity(n);
        let mut duration = 0.0;
        for _ in 0..n {
            let address = self
                .age
                .pop_front()
                .expect("age queue tracks unlocked entries");
            let data = self
                .unlocked
                .remove(&address)
                .expect("aged entry is buffered");
            let cost = rram::word_write_cost(self.rram_value(address), data, self.rng, self.device);
            duration += cost.time;
            self.metrics.e_write += cost.energy;
            words.push((address, data));
        }
        self.metrics.rram_busy_time += duration;
        self.metrics.writes_coalesced += n as u64;
        self.metrics.batches_flushed += 1;
        self.flush = Some(Flush {
            end: self.now + duration,
            words,
        });
    }

    fn finish_flush(&mut self) {
        if let Some(flush) = self.flush.take() {
            for (address, data) in flush.words {
                self.rram.insert(address, data);
                if let Some(p) = self.probe.as_mut() {
                    p.rram_writes.push(address);
                }
            }
        }
    }
}

/// Performance and energy gain relative to the reference system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub pg: f64,
    pub eg: f64,
}

pub fn compute_gains(vac: &SimMetrics, reference: &SimMetrics) -> Result<Gains> {
    if reference.total_time <= 0.0 {
        return Err(Error::ZeroReference("time"));
    }
    let ref_energy = reference.total_energy();
    if ref_energy <= 0.0 {
        return Err(Error::ZeroReference("energy"));
    }
    Ok(Gains {
        pg: (reference.total_time - vac.total_time) / reference.total_time,
        eg: (ref_energy - vac.total_energy()) / ref_energy,
    })
}

/// Chooses the configuration for the next interval from the features of the
/// interval just completed.
pub trait IntervalPolicy {
    fn next_config(&self, raw: &RawFeatures, current: ControllerConfig)
        -> Result<ControllerConfig>;
}

#[derive(Clone, Copy)]
pub struct IntervalOptions<'p> {
    pub interval: usize,
    pub initial: ControllerConfig,
    pub policy: Option<&'p dyn IntervalPolicy>,
    pub normalizers: Normalizers,
}

impl IntervalOptions<'_> {
    pub fn fixed(interval: usize, config: ControllerConfig) -> Self {
        IntervalOptions {
            interval,
            initial: config,
            policy: None,
            normalizers: Normalizers::for_interval(interval),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub index: usize,
    pub start: usize,
    pub len: usize,
    pub raw: RawFeatures,
    pub features: FeatureVector,
    pub config: ControllerConfig,
    pub pg: f64,
    pub eg: f64,
    pub vac: SimMetrics,
    pub reference: SimMetrics,
}

#[derive(Debug, Clone)]
pub struct IntervalRun {
    pub intervals: Vec<IntervalRecord>,
    pub aggregate: SimMetrics,
    pub reference: SimMetrics,
}

impl IntervalRun {
    /// Gains over the intervals in `range` (interval indices).
    pub fn gains_over(&self, range: std::ops::Range<usize>) -> Result<Gains> {
        let mut vac = SimMetrics::default();
        let mut reference = SimMetrics::default();
        for rec in &self.intervals[range] {
            vac.add(&rec.vac);
            reference.add(&rec.reference);
        }
        compute_gains(&vac, &reference)
    }
}

/// Runs `trace` in consecutive windows of `opts.interval` accesses. Buffer
/// contents carry over between windows; a new configuration chosen by the
/// policy takes effect at the next boundary. The last window also pays for
/// the final drain.
pub fn simulate_intervals(
    trace: &Trace,
    opts: &IntervalOptions<'_>,
    device: &DeviceParams,
    params: &SimParams,
    rng: &mut SimRng,
) -> Result<IntervalRun> {
    if opts.interval == 0 {
        return Err(Error::InvalidParams(
            "interval size must be at least 1".into(),
        ));
    }
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut sim = VacSimulator::new(opts.initial, device, params, rng)?;
    let windows: Vec<&[MemoryAccess]> = trace.accesses.chunks(opts.interval).collect();
    let mut intervals = Vec::with_capacity(windows.len());
    let mut reference = SimMetrics::default();
    let mut start = 0;
    for (index, window) in windows.iter().enumerate() {
        let config = sim.config();
        let before = sim.metrics();
        for access in *window {
            sim.step(*access);
        }
        if index + 1 == windows.len() {
            sim.drain();
        }
        let vac = sim.metrics().since(&before);
        let window_ref = reference_metrics(window, device, params);
        reference.add(&window_ref);
        let gains = compute_gains(&vac, &window_ref)?;
        let raw = extract_features(window)?;
        if let Some(policy) = opts.policy {
            if index + 1 < windows.len() {
                let next = policy.next_config(&raw, config)?;
                sim.reconfigure(next);
            }
        }
        intervals.push(IntervalRecord {
            index,
            start,
            len: window.len(),
            raw,
            features: build_feature_vector(&raw, config, &opts.normalizers),
            config,
            pg: gains.pg,
            eg: gains.eg,
            vac,
            reference: window_ref,
        });
        start += window.len();
    }
    Ok(IntervalRun {
        intervals,
        aggregate: sim.metrics(),
        reference,
    })
}
