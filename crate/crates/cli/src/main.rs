//! `avac`: train surrogate models, evaluate static versus adaptive control,
//! sweep the `(W, B)` grid, and generate synthetic traces.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 on a data error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use avac_core::harness::{eval_pipeline, load_models, sweep, train_pipeline, ExperimentConfig};
use avac_core::trace::{profile, PROFILE_NAMES};

#[derive(Debug, Parser)]
#[command(
    name = "avac",
    version,
    about = "Adaptive variability-aware RRAM write controller simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate training data, fit PG/EG models and write them to the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(["3", "5"]))]
        degree: Option<String>,
        /// Overrides `experiment.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare reference, static and adaptive controllers on the configured traces.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding model_pg.json and model_eg.json.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Keep the adaptive controller at the static configuration.
        #[arg(long)]
        no_tuner: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a trace under every configuration of a grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Profile name, `healthfog`, or trace file.
        #[arg(long)]
        trace: String,
        /// Every valid (W, B) instead of the training grid.
        #[arg(long)]
        full_grid: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic trace in the text trace format.
    GenTrace {
        #[arg(long)]
        profile: String,
        #[arg(long)]
        length: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(
    path: &PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<ExperimentConfig> {
    let mut cfg =
        ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            config,
            seed,
            degree,
            out,
        } => {
            let mut cfg = load_config(&config, seed, out)?;
            if let Some(d) = degree {
                cfg.degree = d.parse()?;
            }
            let report = train_pipeline(&cfg)?;
            println!("dataset rows: {}", report.rows);
            println!("degree  rmse_pg  rmse_eg");
            for f in &report.fits {
                println!("{:>6}  {:.6}  {:.6}", f.degree, f.rmse_pg, f.rmse_eg);
            }
            println!(
                "models (degree {}) written to {}",
                report.degree,
                cfg.output_dir.display()
            );
        }
        Command::Eval {
            config,
            models,
            seed,
            no_tuner,
            out,
        } => {
            let mut cfg = load_config(&config, seed, out)?;
            cfg.adaptive &= !no_tuner;
            let (pg, eg) = load_models(&models)
                .with_context(|| format!("loading models from {}", models.display()))?;
            let report = eval_pipeline(&cfg, pg, eg)?;
            println!(
                "{:<12} {:>9} {:>9} {:>11} {:>11}",
                "trace", "pg_static", "eg_static", "pg_adaptive", "eg_adaptive"
            );
            for t in &report.traces {
                println!(
                    "{:<12} {:>9.4} {:>9.4} {:>11.4} {:>11.4}",
                    t.name, t.pg_static, t.eg_static, t.pg_adaptive, t.eg_adaptive
                );
            }
            println!("report written to {}", cfg.output_dir.display());
        }
        Command::Sweep {
            config,
            trace,
            full_grid,
            seed,
            out,
        } => {
            let cfg = load_config(&config, seed, out)?;
            let rows = sweep(&cfg, &trace, full_grid)?;
            let best = rows
                .iter()
                .max_by(|a, b| a.reward.total_cmp(&b.reward))
                .context("empty grid")?;
            println!(
                "{} configurations; best reward {:.6} at ({}, {}) with pg {:.4}, eg {:.4}",
                rows.len(),
                best.reward,
                best.wait_buffer,
                best.batch,
                best.pg,
                best.eg
            );
            println!("grid written to {}", cfg.output_dir.display());
        }
        Command::GenTrace {
            profile: name,
            length,
            seed,
            out,
        } => {
            let p = profile(&name)
                .with_context(|| {
                    format!(
                        "unknown profile `{name}` (known: {})",
                        PROFILE_NAMES.join(", ")
                    )
                })?
                .with_length(length)
                .with_seed(seed);
            let mut trace = avac_core::generate_synthetic(&p)?;
            trace.name = name;
            trace.write_to(&out)?;
            println!("{} accesses written to {}", trace.len(), out.display());
        }
    }
    Ok(())
}
