//! Run configuration: a flat key-value text format with dotted section
//! names, plus the same `key = value` syntax for command-line overrides.
//!
//! ```text
//! # lines starting with '#' are comments
//! trajectory.kind = sinusoidal        # static | sinusoidal | tabulated
//! trajectory.l0 = 1.0
//! trajectory.epsilon = 1e-3
//! trajectory.omega = 9.42477796076938
//! modes.k_max = 60
//! modes.mass = 0.0
//! integrator.abs_tol = 1e-8
//! integrator.rel_tol = 1e-8
//! integrator.method = rk8pd           # rk8pd | dopri5
//! schedule.t_max = 250
//! schedule.checkpoint_interval = 0.5
//! sweep.k_max = 20,30,40,50,60
//! sweep.n = 1
//! sweep.delta_n = 0.0005,0.001,0.002
//! output.dir = out
//! report.modes = 20
//! report.stability_threshold = 1e-5
//! ```
//!
//! Lists are comma-separated. Unknown keys are rejected.

use crate::integrator::{Method, StepperConfig};
use crate::spectrum::ModeSystem;
use crate::trajectory::Trajectory;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing required key '{0}'")]
    Missing(&'static str),
    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),
    #[error("malformed line {line}: expected 'key = value', got '{text}'")]
    MalformedLine { line: usize, text: String },
    #[error("invalid value '{value}' for '{key}': {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Static,
    Sinusoidal,
    Tabulated,
}

#[derive(Debug, Clone)]
pub struct TrajectorySection {
    pub kind: TrajectoryKind,
    pub l0: f64,
    pub epsilon: f64,
    pub omega: f64,
    pub table_path: Option<PathBuf>,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        TrajectorySection {
            kind: TrajectoryKind::Static,
            l0: 1.0,
            epsilon: 0.0,
            omega: 0.0,
            table_path: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModesSection {
    pub k_max: usize,
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct ScheduleSection {
    pub t_max: f64,
    pub checkpoint_interval: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepSection {
    pub k_max: Vec<usize>,
    pub n: Option<f64>,
    pub delta_n: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub csv: String,
    pub json: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: None,
            csv: "run.csv".into(),
            json: "summary.json".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReportSection {
    /// Number of modes reported in CSV columns and stability tables;
    /// defaults to `min(k_max, 20)`.
    pub modes: Option<usize>,
    pub stability_threshold: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            modes: None,
            stability_threshold: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub trajectory: TrajectorySection,
    pub modes: ModesSection,
    pub integrator: StepperConfig,
    pub schedule: ScheduleSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
    pub report: ReportSection,
}

impl RunConfig {
    /// Parses the flat key-value format and validates the result.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::unvalidated();
        let mut seen_kind = false;
        let mut seen_k_max = false;
        let mut seen_t_max = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::MalformedLine {
                line: idx + 1,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            match key {
                "trajectory.kind" => seen_kind = true,
                "modes.k_max" => seen_k_max = true,
                "schedule.t_max" => seen_t_max = true,
                _ => {}
            }
            cfg.apply_override(key, value.trim())?;
        }
        if !seen_kind {
            return Err(ConfigError::Missing("trajectory.kind"));
        }
        if !seen_k_max {
            return Err(ConfigError::Missing("modes.k_max"));
        }
        if !seen_t_max {
            return Err(ConfigError::Missing("schedule.t_max"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    fn unvalidated() -> Self {
        RunConfig {
            trajectory: TrajectorySection::default(),
            modes: ModesSection {
                k_max: 0,
                mass: 0.0,
            },
            integrator: StepperConfig::default(),
            schedule: ScheduleSection {
                t_max: 0.0,
                checkpoint_interval: 0.5,
            },
            sweep: SweepSection::default(),
            output: OutputSection::default(),
            report: ReportSection::default(),
        }
    }

    /// Applies a single `key = value` assignment (also used for CLI flags).
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason,
        };
        match key {
            "trajectory.kind" => {
                self.trajectory.kind = match value {
                    "static" => TrajectoryKind::Static,
                    "sinusoidal" => TrajectoryKind::Sinusoidal,
                    "tabulated" => TrajectoryKind::Tabulated,
                    other => {
                        return Err(bad(format!(
                            "unknown kind '{other}' (static | sinusoidal | tabulated)"
                        )))
                    }
                };
            }
            "trajectory.l0" => self.trajectory.l0 = parse_f64(value).map_err(bad)?,
            "trajectory.epsilon" => self.trajectory.epsilon = parse_f64(value).map_err(bad)?,
            "trajectory.omega" => self.trajectory.omega = parse_f64(value).map_err(bad)?,
            "trajectory.table_path" => {
                self.trajectory.table_path = Some(PathBuf::from(value));
            }
            "modes.k_max" => self.modes.k_max = parse_usize(value).map_err(bad)?,
            "modes.mass" => self.modes.mass = parse_f64(value).map_err(bad)?,
            "integrator.abs_tol" => self.integrator.abs_tol = parse_f64(value).map_err(bad)?,
            "integrator.rel_tol" => self.integrator.rel_tol = parse_f64(value).map_err(bad)?,
            "integrator.initial_step" => {
                self.integrator.initial_step = parse_f64(value).map_err(bad)?
            }
            "integrator.max_step" => self.integrator.max_step = parse_f64(value).map_err(bad)?,
            "integrator.method" => {
                self.integrator.method = value.parse::<Method>().map_err(bad)?
            }
            "schedule.t_max" => self.schedule.t_max = parse_f64(value).map_err(bad)?,
            "schedule.checkpoint_interval" => {
                self.schedule.checkpoint_interval = parse_f64(value).map_err(bad)?
            }
            "sweep.k_max" => {
                self.sweep.k_max = parse_list(value, parse_usize).map_err(bad)?;
            }
            "sweep.n" => self.sweep.n = Some(parse_f64(value).map_err(bad)?),
            "sweep.delta_n" => {
                self.sweep.delta_n = parse_list(value, parse_f64).map_err(bad)?;
            }
            "output.dir" => self.output.dir = Some(PathBuf::from(value)),
            "output.csv" => self.output.csv = value.to_string(),
            "output.json" => self.output.json = value.to_string(),
            "report.modes" => self.report.modes = Some(parse_usize(value).map_err(bad)?),
            "report.stability_threshold" => {
                self.report.stability_threshold = parse_f64(value).map_err(bad)?
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.modes.k_max == 0 {
            return Err(ConfigError::Invalid("modes.k_max must be at least 1".into()));
        }
        if !(self.modes.mass >= 0.0) {
            return Err(ConfigError::Invalid(
                "modes.mass must be non-negative".into(),
            ));
        }
        if !(self.schedule.t_max > 0.0) {
            return Err(ConfigError::Invalid(
                "schedule.t_max must be positive".into(),
            ));
        }
        if !(self.schedule.checkpoint_interval > 0.0) {
            return Err(ConfigError::Invalid(
                "schedule.checkpoint_interval must be positive".into(),
            ));
        }
        if self.trajectory.kind == TrajectoryKind::Tabulated
            && self.trajectory.table_path.is_none()
        {
            return Err(ConfigError::Invalid(
                "tabulated trajectory requires trajectory.table_path".into(),
            ));
        }
        let reported = self.reported_modes(self.modes.k_max);
        if reported == 0 {
            return Err(ConfigError::Invalid("report.modes must be at least 1".into()));
        }
        for &k in &self.sweep.k_max {
            if k < reported {
                return Err(ConfigError::Invalid(format!(
                    "sweep k_max {k} is smaller than the {reported} reported modes"
                )));
            }
        }
        if !(self.report.stability_threshold > 0.0) {
            return Err(ConfigError::Invalid(
                "report.stability_threshold must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of modes reported for a run at the given cut-off.
    pub fn reported_modes(&self, k_max: usize) -> usize {
        self.report.modes.unwrap_or(20).min(k_max)
    }

    /// Builds the trajectory, reading the sample table if required.
    pub fn build_trajectory(&self) -> Result<Trajectory, crate::harness::HarnessError> {
        use crate::harness::HarnessError;
        match self.trajectory.kind {
            TrajectoryKind::Static => {
                Trajectory::fixed(self.trajectory.l0).map_err(HarnessError::from)
            }
            TrajectoryKind::Sinusoidal => Trajectory::sinusoidal(
                self.trajectory.l0,
                self.trajectory.epsilon,
                self.trajectory.omega,
            )
            .map_err(HarnessError::from),
            TrajectoryKind::Tabulated => {
                let path = self.trajectory.table_path.as_ref().expect("validated");
                let points = read_table(path)?;
                Trajectory::tabulated(points).map_err(HarnessError::from)
            }
        }
    }

    pub fn build_modes(&self, k_max: usize) -> Result<ModeSystem, crate::harness::HarnessError> {
        ModeSystem::dirichlet(k_max, self.modes.mass, self.trajectory.l0)
            .map_err(crate::harness::HarnessError::from)
    }

    /// Checkpoint times `0, Δ, 2Δ, ..., t_max` (the end time is always
    /// included, exactly).
    pub fn checkpoints(&self) -> Vec<f64> {
        let dt = self.schedule.checkpoint_interval;
        let t_max = self.schedule.t_max;
        let n = (t_max / dt).floor() as usize;
        let mut cps = Vec::with_capacity(n + 2);
        cps.push(0.0);
        for i in 1..=n {
            cps.push(i as f64 * dt);
        }
        let last = *cps.last().unwrap();
        if t_max - last > 1e-9 * t_max.max(1.0) {
            cps.push(t_max);
        } else {
            *cps.last_mut().unwrap() = t_max;
        }
        cps
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(idx) => &line[..idx],
        None => line,
    }
}

fn parse_f64(value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|e| format!("not a number: {e}"))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err("must be finite".into())
            }
        })
}

fn parse_usize(value: &str) -> Result<usize, String> {
    value
        .parse::<usize>()
        .map_err(|e| format!("not a non-negative integer: {e}"))
}

fn parse_list<T>(value: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(|part| item(part.trim()))
        .collect::<Result<Vec<T>, String>>()
        .and_then(|v| {
            if v.is_empty() {
                Err("empty list".into())
            } else {
                Ok(v)
            }
        })
}

/// Reads a `(t, l)` sample table: one `t,l` pair per line, `#` comments.
fn read_table(path: &Path) -> Result<Vec<(f64, f64)>, crate::harness::HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        crate::harness::HarnessError::Config(ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })
    })?;
    let mut points = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let (t, l) = line
            .split_once(',')
            .ok_or_else(|| bad_table_line(path, idx, raw))?;
        let t = t.trim().parse::<f64>().map_err(|_| bad_table_line(path, idx, raw))?;
        let l = l.trim().parse::<f64>().map_err(|_| bad_table_line(path, idx, raw))?;
        points.push((t, l));
    }
    Ok(points)
}

fn bad_table_line(path: &Path, idx: usize, raw: &str) -> crate::harness::HarnessError {
    crate::harness::HarnessError::Config(ConfigError::Invalid(format!(
        "{}:{}: expected 't,l', got '{}'",
        path.display(),
        idx + 1,
        raw
    )))
}
