//! Experiment pipelines: training-data generation and fitting, static versus
//! adaptive evaluation, and grid sweeps. Every output is a deterministic
//! function of the configuration and seed.

mod config;
mod eval;
mod sweep;
mod train;

use std::fs;
use std::path::Path;

pub use config::{default_grid, ExperimentConfig, Mode};
pub use eval::{eval_pipeline, load_models, GainReport, IntervalRow, StageGains, TraceReport};
pub use sweep::{sweep, SweepRow};
pub use train::{build_dataset, train_pipeline, DegreeFit, TrainReport};

use crate::error::{Error, Result};
use crate::rram::SimRng;
use crate::trace::{parse_trace, profile, staged_trace, Trace};

/// Name of the staged three-phase healthcare trace.
pub const HEALTHFOG: &str = "healthfog";
/// Stage lengths of [`HEALTHFOG`] at its default length.
pub const HEALTHFOG_STAGES: [(&str, usize); 3] = [("t1", 3000), ("t2", 3000), ("t3", 4000)];

/// Builds the trace named by a profile, [`HEALTHFOG`], or a file path.
/// `length` overrides the length of synthetic traces.
pub fn resolve_trace(source: &str, length: Option<usize>) -> Result<Trace> {
    if let Some(p) = profile(source) {
        let p = length.map_or(p, |n| p.with_length(n));
        let mut trace = crate::trace::generate_synthetic(&p)?;
        trace.name = source.to_owned();
        return Ok(trace);
    }
    if source == HEALTHFOG {
        let total: usize = HEALTHFOG_STAGES.iter().map(|s| s.1).sum();
        let n = length.unwrap_or(total);
        let mut stages = Vec::new();
        let mut used = 0;
        for (i, (name, len)) in HEALTHFOG_STAGES.iter().enumerate() {
            let len = if i + 1 == HEALTHFOG_STAGES.len() {
                n - used
            } else {
                len * n / total
            };
            used += len;
            stages.push((profile(name).expect("stage profile"), len));
        }
        let mut trace = staged_trace(&stages)?;
        trace.name = HEALTHFOG.to_owned();
        return Ok(trace);
    }
    if Path::new(source).is_file() {
        return parse_trace(source);
    }
    Err(Error::UnknownTrace(source.to_owned()))
}

/// Stream of the generator used for trace number `trace` (and window
/// `window` when a pipeline simulates windows independently).
pub(crate) fn rng_for(seed: u64, trace: usize, window: usize) -> SimRng {
    SimRng::with_stream(seed, ((trace as u64) << 32) | window as u64)
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

/// File-name-safe form of a trace name.
pub(crate) fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
