use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::Normalizers;
use crate::poly::{PolyModel, Target};
use crate::sim::{compute_gains, simulate_intervals, IntervalOptions, IntervalPolicy, IntervalRun};
use crate::trace::Trace;
use crate::tuner::{reward, Tuner};

use super::{resolve_trace, rng_for, write_file, ExperimentConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageGains {
    pub stage: usize,
    /// First and one-past-last interval index of the stage.
    pub intervals: (usize, usize),
    pub pg_static: f64,
    pub eg_static: f64,
    pub pg_adaptive: f64,
    pub eg_adaptive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRow {
    pub index: usize,
    pub start: usize,
    pub len: usize,
    pub static_config: (u32, u32),
    pub adaptive_config: (u32, u32),
    pub pg_static: f64,
    pub eg_static: f64,
    pub pg_adaptive: f64,
    pub eg_adaptive: f64,
    pub reward_static: f64,
    pub reward_adaptive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceReport {
    pub name: String,
    pub length: usize,
    pub pg_static: f64,
    pub eg_static: f64,
    pub pg_adaptive: f64,
    pub eg_adaptive: f64,
    /// Reward of the whole-trace gains.
    pub reward_static: f64,
    pub reward_adaptive: f64,
    /// Sum of per-interval rewards.
    pub cumulative_reward_static: f64,
    pub cumulative_reward_adaptive: f64,
    /// Adaptive configuration of every interval.
    pub chosen: Vec<(u32, u32)>,
    pub stages: Vec<StageGains>,
    pub intervals: Vec<IntervalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub alpha: f64,
    pub beta: f64,
    pub interval: usize,
    pub traces: Vec<TraceReport>,
}

impl GainReport {
    pub const CSV_HEADER: &'static str =
        "trace,length,intervals,pg_static,eg_static,pg_adaptive,eg_adaptive,\
reward_static,reward_adaptive,cumulative_reward_static,cumulative_reward_adaptive";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for t in &self.traces {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                t.name,
                t.length,
                t.intervals.len(),
                t.pg_static,
                t.eg_static,
                t.pg_adaptive,
                t.eg_adaptive,
                t.reward_static,
                t.reward_adaptive,
                t.cumulative_reward_static,
                t.cumulative_reward_adaptive
            )
            .unwrap();
        }
        out
    }

    /// Per-interval time series of every trace.
    pub fn intervals_csv(&self) -> String {
        let mut out = String::from(
            "trace,index,start,len,static_w,static_b,adaptive_w,adaptive_b,pg_static,eg_static,pg_adaptive,eg_adaptive,\
reward_static,reward_adaptive\n",
        );
        for t in &self.traces {
            for r in &t.intervals {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    t.name,
                    r.index,
                    r.start,
                    r.len,
                    r.static_config.0,
                    r.static_config.1,
                    r.adaptive_config.0,
                    r.adaptive_config.1,
                    r.pg_static,
                    r.eg_static,
                    r.pg_adaptive,
                    r.eg_adaptive,
                    r.reward_static,
                    r.reward_adaptive
                )
                .unwrap();
            }
        }
        out
    }
}

/// Loads `model_pg.json` and `model_eg.json` from `dir`.
pub fn load_models(dir: impl AsRef<Path>) -> Result<(PolyModel, PolyModel)> {
    let dir = dir.as_ref();
    let pg = PolyModel::load(dir.join("model_pg.json"))?;
    let eg = PolyModel::load(dir.join("model_eg.json"))?;
    if pg.target() != Target::Pg || eg.target() != Target::Eg {
        return Err(Error::Model(
            "model_pg.json and model_eg.json hold the wrong targets".into(),
        ));
    }
    Ok((pg, eg))
}

/// Runs the static and adaptive controllers over every configured trace and
/// writes `report.json`, `report.csv` and `intervals.csv` to
/// `cfg.output_dir`. Both controllers of a trace share one switching-time
/// stream.
pub fn eval_pipeline(cfg: &ExperimentConfig, pg: PolyModel, eg: PolyModel) -> Result<GainReport> {
    cfg.validate()?;
    let norms = Normalizers::for_interval(cfg.interval);
    if pg.normalizers() != &norms || eg.normalizers() != &norms {
        return Err(Error::Model(format!(
            "models were trained with a different interval size than {}",
            cfg.interval
        )));
    }
    let tuner = Tuner::new(pg, eg, cfg.tuner)?;
    let traces = cfg
        .traces
        .iter()
        .map(|s| resolve_trace(s, cfg.trace_length))
        .collect::<Result<Vec<_>>>()?;
    let reports = traces
        .par_iter()
        .enumerate()
        .map(|(t, trace)| evaluate_trace(cfg, &tuner, t, trace))
        .collect::<Result<Vec<_>>>()?;
    let report = GainReport {
        alpha: cfg.tuner.alpha,
        beta: cfg.tuner.beta,
        interval: cfg.interval,
        traces: reports,
    };

    write_file(
        &cfg.output_dir,
        "report.json",
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    write_file(&cfg.output_dir, "report.csv", &report.to_csv())?;
    write_file(&cfg.output_dir, "intervals.csv", &report.intervals_csv())?;
    Ok(report)
}

fn evaluate_trace(
    cfg: &ExperimentConfig,
    tuner: &Tuner,
    t: usize,
    trace: &Trace,
) -> Result<TraceReport> {
    let norms = *tuner.normalizers();
    let fixed = IntervalOptions {
        normalizers: norms,
        ..IntervalOptions::fixed(cfg.interval, cfg.static_config)
    };
    let adaptive_opts = IntervalOptions {
        policy: cfg.adaptive.then_some(tuner as &dyn IntervalPolicy),
        ..fixed
    };

    let stat = simulate_intervals(
        trace,
        &fixed,
        &cfg.device,
        &cfg.sim,
        &mut rng_for(cfg.seed, t, 0),
    )?;
    let adap = simulate_intervals(
        trace,
        &adaptive_opts,
        &cfg.device,
        &cfg.sim,
        &mut rng_for(cfg.seed, t, 0),
    )?;
    let p = &cfg.tuner;

    let s = compute_gains(&stat.aggregate, &stat.reference)?;
    let a = compute_gains(&adap.aggregate, &adap.reference)?;
    let intervals: Vec<IntervalRow> = stat
        .intervals
        .iter()
        .zip(&adap.intervals)
        .map(|(si, ai)| IntervalRow {
            index: si.index,
            start: si.start,
            len: si.len,
            static_config: si.config.into(),
            adaptive_config: ai.config.into(),
            pg_static: si.pg,
            eg_static: si.eg,
            pg_adaptive: ai.pg,
            eg_adaptive: ai.eg,
            reward_static: reward(si.pg, si.eg, p),
            reward_adaptive: reward(ai.pg, ai.eg, p),
        })
        .collect();

    Ok(TraceReport {
        name: trace.name.clone(),
        length: trace.len(),
        pg_static: s.pg,
        eg_static: s.eg,
        pg_adaptive: a.pg,
        eg_adaptive: a.eg,
        reward_static: reward(s.pg, s.eg, p),
        reward_adaptive: reward(a.pg, a.eg, p),
        cumulative_reward_static: intervals.iter().map(|r| r.reward_static).sum(),
        cumulative_reward_adaptive: intervals.iter().map(|r| r.reward_adaptive).sum(),
        chosen: intervals.iter().map(|r| r.adaptive_config).collect(),
        stages: stage_gains(trace, &stat, &adap)?,
        intervals,
    })
}

/// Gains per stage of a staged trace; a stage owns the intervals that start
/// inside it.
fn stage_gains(trace: &Trace, stat: &IntervalRun, adap: &IntervalRun) -> Result<Vec<StageGains>> {
    if trace.stage_ends.len() < 2 {
        return Ok(Vec::new());
    }
    let mut stages = Vec::new();
    let mut first = 0;
    for (stage, &end) in trace.stage_ends.iter().enumerate() {
        let last = stat.intervals.iter().take_while(|r| r.start < end).count();
        if last > first {
            let s = stat.gains_over(first..last)?;
            let a = adap.gains_over(first..last)?;
            stages.push(StageGains {
                stage,
                intervals: (first, last),
                pg_static: s.pg,
                eg_static: s.eg,
                pg_adaptive: a.pg,
                eg_adaptive: a.eg,
            });
        }
        first = last;
    }
    Ok(stages)
}
