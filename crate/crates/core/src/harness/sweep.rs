use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::sim::{compute_gains, reference_metrics, simulate_vac, ControllerConfig};
use crate::tuner::reward;

use super::{resolve_trace, rng_for, slug, write_file, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub wait_buffer: u32,
    pub batch: u32,
    pub pg: f64,
    pub eg: f64,
    pub reward: f64,
}

/// Simulates the whole trace once per grid configuration, each run drawing
/// from stream 0 of `cfg.seed` (what `SimRng::with_stream(cfg.seed, 0)`
/// yields). The grid is every valid `(W, B)` with `full_grid`, the configured
/// training grid otherwise. Writes `sweep_<trace>.csv` to `cfg.output_dir`.
pub fn sweep(cfg: &ExperimentConfig, trace_source: &str, full_grid: bool) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let trace = resolve_trace(trace_source, cfg.trace_length)?;
    let grid: Vec<ControllerConfig> = if full_grid {
        ControllerConfig::all().collect()
    } else {
        cfg.grid()
    };
    let reference = reference_metrics(&trace.accesses, &cfg.device, &cfg.sim);
    let rows = grid
        .par_iter()
        .map(|&config| {
            let vac = simulate_vac(
                &trace,
                config,
                &cfg.device,
                &cfg.sim,
                &mut rng_for(cfg.seed, 0, 0),
            )?;
            let g = compute_gains(&vac, &reference)?;
            Ok(SweepRow {
                wait_buffer: config.wait_buffer(),
                batch: config.batch(),
                pg: g.pg,
                eg: g.eg,
                reward: reward(g.pg, g.eg, &cfg.tuner),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut csv = String::from("w,b,pg,eg,reward\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            r.wait_buffer, r.batch, r.pg, r.eg, r.reward
        )
        .unwrap();
    }
    write_file(
        &cfg.output_dir,
        &format!("sweep_{}.csv", slug(&trace.name)),
        &csv,
    )?;
    Ok(rows)
}
