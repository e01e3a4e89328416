//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! experiment.traces = cs, fe, healthfog, traces/app.trace
//! experiment.interval = 1000
//! experiment.static_config = 80, 10
//! device.sigma = 5.0
//! tuner.alpha = 0.1
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::poly::DEFAULT_RIDGE;
use crate::rram::DeviceParams;
use crate::sim::{ControllerConfig, SimParams};
use crate::trace::{profile, TRAINING_PROFILES};
use crate::tuner::TunerParams;

use super::HEALTHFOG;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    /// Profile names, `healthfog`, or trace file paths.
    pub traces: Vec<String>,
    pub interval: usize,
    pub static_config: ControllerConfig,
    pub device: DeviceParams,
    pub sim: SimParams,
    pub tuner: TunerParams,
    /// Run the adaptive controller with the tuner; when false it keeps the
    /// static configuration.
    pub adaptive: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub degree: u32,
    pub ridge: f64,
    /// Training and strided-sweep grid values; pairs with `B > W` are skipped.
    pub grid_w: Vec<u32>,
    pub grid_b: Vec<u32>,
    /// Overrides the length of synthetic traces.
    pub trace_length: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: None,
            traces: TRAINING_PROFILES.iter().map(|s| s.to_string()).collect(),
            interval: 1000,
            static_config: ControllerConfig::STATIC_DEFAULT,
            device: DeviceParams::default(),
            sim: SimParams::default(),
            tuner: TunerParams::default(),
            adaptive: true,
            seed: 0,
            output_dir: PathBuf::from("out"),
            degree: 5,
            ridge: DEFAULT_RIDGE,
            grid_w: default_grid(10, 120),
            grid_b: default_grid(5, 80),
            trace_length: None,
        }
    }
}

/// `1, stride, 2 * stride, ..., max`.
pub fn default_grid(stride: u32, max: u32) -> Vec<u32> {
    let mut v = vec![1];
    v.extend((stride..=max).step_by(stride as usize));
    if *v.last().unwrap() != max {
        v.push(max);
    }
    v
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, path, base)
    }

    /// Parses `text`; relative trace paths and the output directory are
    /// resolved against `base`. `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::ConfigFile {
                path: origin.to_owned(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            cfg.set(key.trim(), value.trim(), base).map_err(err)?;
        }
        cfg.validate().map_err(|e| Error::ConfigFile {
            path: origin.to_owned(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> std::result::Result<(), String> {
        let d = &mut self.device;
        let s = &mut self.sim;
        let t = &mut self.tuner;
        match key {
            "experiment.mode" => {
                self.mode = Some(match value {
                    "train" => Mode::Train,
                    "eval" => Mode::Eval,
                    "sweep" => Mode::Sweep,
                    _ => return Err(format!("unknown mode `{value}`")),
                })
            }
            "experiment.traces" => {
                self.traces = list(value)
                    .map(|name| {
                        if profile(name).is_some() || name == HEALTHFOG {
                            name.to_owned()
                        } else {
                            base.join(name).to_string_lossy().into_owned()
                        }
                    })
                    .collect();
            }
            "experiment.interval" => self.interval = num(value)?,
            "experiment.static_config" => {
                let v: Vec<u32> = list(value)
                    .map(num)
                    .collect::<std::result::Result<_, _>>()?;
                let [w, b] = v[..] else {
                    return Err("static_config needs two values: W, B".into());
                };
                self.static_config = ControllerConfig::new(w, b).map_err(|e| e.to_string())?;
            }
            "experiment.adaptive" => self.adaptive = num(value)?,
            "experiment.seed" => self.seed = num(value)?,
            "experiment.output_dir" => self.output_dir = base.join(value),
            "experiment.degree" => self.degree = num(value)?,
            "experiment.ridge" => self.ridge = num(value)?,
            "experiment.grid_w" => {
                self.grid_w = list(value)
                    .map(num)
                    .collect::<std::result::Result<_, _>>()?
            }
            "experiment.grid_b" => {
                self.grid_b = list(value)
                    .map(num)
                    .collect::<std::result::Result<_, _>>()?
            }
            "experiment.trace_length" => self.trace_length = Some(num(value)?),
            "device.v_prog" => d.v_prog = num(value)?,
            "device.i_prog" => d.i_prog = num(value)?,
            "device.t_worst" => d.t_worst = num(value)?,
            "device.mu" => d.mu = num(value)?,
            "device.sigma" => d.sigma = num(value)?,
            "device.t_detect" => d.t_detect = num(value)?,
            "device.e_read_bit" => d.e_read_bit = num(value)?,
            "device.t_read" => d.t_read = num(value)?,
            "device.i_leak_bit" => d.i_leak_bit = num(value)?,
            "device.word_bits" => d.word_bits = num(value)?,
            "sim.t_cpu" => s.t_cpu = num(value)?,
            "sim.t_buf" => s.t_buf = num(value)?,
            "sim.e_buf_word" => s.e_buf_word = num(value)?,
            "tuner.alpha" => t.alpha = num(value)?,
            "tuner.beta" => t.beta = num(value)?,
            "tuner.learning_rate" => t.learning_rate = num(value)?,
            "tuner.momentum" => t.momentum = num(value)?,
            "tuner.max_iters" => t.max_iters = num(value)?,
            "tuner.tol" => t.tol = num(value)?,
            "tuner.multi_start" => t.multi_start = num(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.interval == 0 {
            return bad("experiment.interval must be at least 1".into());
        }
        if self.traces.is_empty() {
            return bad("experiment.traces is empty".into());
        }
        for t in &self.traces {
            if profile(t).is_none() && t != HEALTHFOG && !Path::new(t).is_file() {
                return Err(Error::UnknownTrace(t.clone()));
            }
        }
        if self.trace_length == Some(0) {
            return bad("experiment.trace_length must be at least 1".into());
        }
        if !(1..=8).contains(&self.degree) {
            return bad(format!("experiment.degree {} is out of range", self.degree));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad("experiment.ridge must be non-negative".into());
        }
        for (name, grid, max) in [
            ("grid_w", &self.grid_w, ControllerConfig::MAX_WAIT_BUFFER),
            ("grid_b", &self.grid_b, ControllerConfig::MAX_BATCH),
        ] {
            if grid.is_empty() || grid.iter().any(|v| *v == 0 || *v > max) {
                return bad(format!("experiment.{name} values must lie in [1, {max}]"));
            }
        }
        self.device.validate()?;
        self.sim.validate()?;
        self.tuner.validate()
    }

    /// Valid `(W, B)` pairs of the configured grid, `W`-major.
    pub fn grid(&self) -> Vec<ControllerConfig> {
        let mut w = self.grid_w.clone();
        let mut b = self.grid_b.clone();
        w.sort_unstable();
        w.dedup();
        b.sort_unstable();
        b.dedup();
        w.iter()
            .flat_map(|&w| {
                b.iter()
                    .filter_map(move |&b| ControllerConfig::new(w, b).ok())
            })
            .collect()
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("`{value}`: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("test.cfg"), Path::new("/base"))
    }

    #[test]
    fn defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.static_config, ControllerConfig::new(80, 10).unwrap());
        assert_eq!(cfg.interval, 1000);
        assert_eq!(
            cfg.grid_w,
            vec![1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120]
        );
        assert_eq!(cfg.grid_b.len(), 17);
        assert_eq!(cfg.grid().len(), 149);
    }

    #[test]
    fn keys_override_defaults() {
        let cfg = parse(
            "experiment.traces = mm, healthfog  # two\n\
             experiment.interval = 500\n\
             experiment.static_config = 40, 20\n\
             experiment.output_dir = results\n\
             device.sigma = 2.5\n\
             sim.t_cpu = 5\n\
             tuner.alpha = 1\n\
             tuner.beta = 0\n\
             tuner.multi_start = true\n",
        )
        .unwrap();
        assert_eq!(cfg.traces, vec!["mm", "healthfog"]);
        assert_eq!(cfg.interval, 500);
        assert_eq!(cfg.static_config, ControllerConfig::new(40, 20).unwrap());
        assert_eq!(cfg.output_dir, PathBuf::from("/base/results"));
        assert_eq!(cfg.device.sigma, 2.5);
        assert_eq!(cfg.sim.t_cpu, 5.0);
        assert!(cfg.tuner.multi_start);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse("\n# c\nexperiment.nope = 3\n").unwrap_err();
        assert!(matches!(err, Error::ConfigFile { line: 3, .. }), "{err}");
        assert!(matches!(
            parse("experiment.interval 3").unwrap_err(),
            Error::ConfigFile { line: 1, .. }
        ));
        assert!(parse("experiment.interval = x").is_err());
        assert!(parse("experiment.interval = 0").is_err());
        assert!(parse("experiment.static_config = 10, 20").is_err());
        assert!(parse("tuner.alpha = 0.5").is_err());
        assert!(parse("experiment.traces = /no/such/file.trace").is_err());
        assert!(parse("experiment.grid_b = 0, 5").is_err());
    }

    #[test]
    fn grid_skips_batches_above_the_buffer() {
        let cfg = parse("experiment.grid_w = 1, 60, 120\nexperiment.grid_b = 1, 40, 80").unwrap();
        let pairs: Vec<(u32, u32)> = cfg.grid().into_iter().map(Into::into).collect();
        assert_eq!(
            pairs,
            vec![(1, 1), (60, 1), (60, 40), (120, 1), (120, 40), (120, 80)]
        );
    }
}
