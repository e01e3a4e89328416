//! Trace-driven simulation of an adaptive, variability-aware RRAM write
//! controller.
//!
//! Memory traces are replayed through a Wait Buffer / batch controller that
//! coalesces writes into batches and programs them into a stochastic RRAM
//! model. Every interval of accesses is summarised by a small feature vector,
//! polynomial surrogates predict the performance and energy gain of a
//! candidate `(W, B)` configuration, and a momentum gradient ascent picks the
//! configuration for the next interval.
//!
//! The crate is organised bottom-up:
//!
//! - [`trace`]: memory accesses, the trace text format and synthetic traces.
//! - [`rram`]: device constants, switching-time sampling and energy accounting.
//! - [`sim`]: reference, static and interval-driven controller simulation.
//! - [`features`]: per-interval trace features and the 10-D feature vector.
//! - [`poly`]: multivariate polynomial surrogates (fit, predict, gradient).
//! - [`tuner`]: reward and projected momentum gradient ascent over `(W, B)`.
//! - [`harness`]: train / eval / sweep pipelines and their file formats.

pub mod error;
pub mod features;
pub mod harness;
pub mod poly;
pub mod rram;
pub mod sim;
pub mod trace;
pub mod tuner;

pub use error::{Error, Result};
pub use features::{
    build_feature_vector, extract_features, FeatureVector, Normalizers, RawFeatures,
};
pub use poly::{fit, DataRow, Dataset, FitOutput, PolyModel, Target};
pub use rram::{DeviceParams, SimRng};
pub use sim::{
    compute_gains, simulate_intervals, simulate_reference, simulate_vac, ControllerConfig, Gains,
    IntervalOptions, IntervalPolicy, IntervalRun, SimMetrics, SimParams,
};
pub use trace::{
    generate_synthetic, parse_trace, staged_trace, MemoryAccess, SyntheticProfile, Trace,
};
pub use tuner::{reward, Tuner, TunerParams};
