//! Run drivers behind the CLI: single runs, cut-off convergence sweeps and
//! detuning sweeps, with streaming CSV rows and JSON summaries.
//!
//! Output is deterministic: summation orders are fixed and nothing depends
//! on wall-clock time or random seeds, so identical configurations produce
//! bit-identical files. Every checkpoint row is flushed before the next
//! integration segment begins, so an interrupted run leaves a valid CSV
//! prefix.

use crate::analytic::{DetunedPrediction, ResonancePrediction};
use crate::config::{ConfigError, RunConfig, TrajectoryKind};
use crate::dynamics::{EvolutionState, XiEtaSystem};
use crate::integrator::{integrate, Stats};
use crate::observables::{extract_bogoliubov, particle_spectrum, ObservableRecord};
use crate::spectrum::SpectrumError;
use crate::trajectory::TrajectoryError;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Analytic overlay attached to a run when the scenario matches a known
/// prediction (sinusoidal massless motion in `l0 = 1` units).
#[derive(Debug, Clone, Copy)]
pub enum Overlay {
    Resonant(ResonancePrediction),
    Detuned(DetunedPrediction),
}

impl Overlay {
    /// `(N_pred, E_pred)` columns at time `t`. For detuned drives the
    /// particle number uses the single-dominant-mode reduction
    /// `N ≈ E/Ω_n = E/(nπ)`.
    pub fn columns(&self, t: f64) -> (f64, f64) {
        match self {
            Overlay::Resonant(p) => (p.total_number(t), p.energy(t)),
            Overlay::Detuned(p) => {
                let e = p.energy(t);
                (e / (p.n * PI), e)
            }
        }
    }

    pub fn short_time_ok(&self, t: f64) -> bool {
        match self {
            Overlay::Resonant(p) => p.short_time_ok(t),
            Overlay::Detuned(p) => p.short_time_ok(t),
        }
    }
}

/// Picks the resonant overlay when the drive sits exactly on `ω = 2nπ` with
/// integer or half-integer `n` (massless field, `l0 = 1`).
pub fn resonant_overlay(cfg: &RunConfig) -> Option<Overlay> {
    if cfg.trajectory.kind != TrajectoryKind::Sinusoidal
        || cfg.modes.mass != 0.0
        || (cfg.trajectory.l0 - 1.0).abs() > 1e-12
    {
        return None;
    }
    let two_n = cfg.trajectory.omega / PI;
    let rounded = two_n.round();
    if rounded >= 1.0 && (two_n - rounded).abs() < 1e-9 {
        Some(Overlay::Resonant(ResonancePrediction::new(
            rounded / 2.0,
            cfg.trajectory.epsilon,
        )))
    } else {
        None
    }
}

/// Result of one integration run.
#[derive(Debug)]
pub struct RunOutput {
    pub k_max: usize,
    pub records: Vec<ObservableRecord>,
    pub stats: Stats,
    pub completed: bool,
    /// Failing-time diagnostic when the integration aborted.
    pub failure: Option<String>,
    pub overlay: Option<Overlay>,
}

impl RunOutput {
    pub fn final_record(&self) -> Option<&ObservableRecord> {
        self.records.last()
    }

    /// Record at checkpoint time `t` (exact grid match within 1e-9).
    pub fn record_at(&self, t: f64) -> Option<&ObservableRecord> {
        self.records
            .iter()
            .find(|r| (r.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

/// Integrates the ξ/η system for one cut-off and streams each checkpoint
/// record into `sink` as soon as it is extracted.
fn execute_run(
    cfg: &RunConfig,
    k_max: usize,
    overlay: Option<Overlay>,
    mut sink: impl FnMut(&ObservableRecord),
) -> Result<RunOutput, HarnessError> {
    let traj = cfg.build_trajectory()?;
    if traj.t_end() < cfg.schedule.t_max {
        return Err(HarnessError::Invalid(format!(
            "trajectory table ends at t = {} but schedule.t_max = {}",
            traj.t_end(),
            cfg.schedule.t_max
        )));
    }
    let sys = cfg.build_modes(k_max)?;
    let checkpoints = cfg.checkpoints();
    let mut system = XiEtaSystem::new(&sys, &traj);
    let y0 = system.initial_state();
    let mut records: Vec<ObservableRecord> = Vec::with_capacity(checkpoints.len());

    let result = integrate(
        &mut system,
        &y0,
        0.0,
        &checkpoints,
        &cfg.integrator,
        |t, y| {
            let state = EvolutionState::from_flat(t, y, k_max);
            let (l, l_dot) = traj
                .evaluate(t)
                .expect("checkpoints lie inside the trajectory domain");
            let pair =
                extract_bogoliubov(&state, &sys, l, l_dot).expect("trajectory keeps l positive");
            let record = particle_spectrum(&pair);
            sink(&record);
            records.push(record);
        },
    );

    match result {
        Ok(stats) => Ok(RunOutput {
            k_max,
            records,
            stats,
            completed: true,
            failure: None,
            overlay,
        }),
        Err(err) => Ok(RunOutput {
            k_max,
            records,
            stats: Stats::default(),
            completed: false,
            failure: Some(err.to_string()),
            overlay,
        }),
    }
}

/// Runs one configuration, writing `csv_name`/`json_name` under `dir` when an
/// output directory is configured. Integration failures are not hard errors:
/// the partial output is preserved and marked incomplete.
fn run_with_files(
    cfg: &RunConfig,
    k_max: usize,
    overlay: Option<Overlay>,
    dir: Option<&Path>,
    csv_name: &str,
    json_name: &str,
) -> Result<RunOutput, HarnessError> {
    let output = match dir {
        None => execute_run(cfg, k_max, overlay, |_| {})?,
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
            let k_report = cfg.reported_modes(k_max);
            let mut csv = CsvWriter::create(dir.join(csv_name), k_report, overlay)?;
            let mut write_failure: Option<HarnessError> = None;
            let output = execute_run(cfg, k_max, overlay, |record| {
                if write_failure.is_none() {
                    if let Err(e) = csv.write_record(record) {
                        write_failure = Some(e);
                    }
                }
            })?;
            if let Some(e) = write_failure {
                return Err(e);
            }
            let summary = RunSummary::from_output(cfg, &output);
            write_json(&dir.join(json_name), &summary)?;
            output
        }
    };
    Ok(output)
}

/// Executes a single run per the configuration (`run` subcommand).
pub fn run_single(cfg: &RunConfig) -> Result<RunOutput, HarnessError> {
    let overlay = resonant_overlay(cfg);
    run_with_files(
        cfg,
        cfg.modes.k_max,
        overlay,
        cfg.output.dir.as_deref(),
        &cfg.output.csv,
        &cfg.output.json,
    )
}

/// Stability of one reported mode across the cut-off sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ModeStability {
    /// 1-based mode number.
    pub mode: usize,
    /// `N_k` at the probe time, one entry per sweep cut-off (NaN = failed run).
    pub n_k: Vec<f64>,
    /// Max spread across successful runs.
    pub variation: f64,
    pub stable: bool,
}

/// Outcome of a cut-off convergence sweep.
#[derive(Debug)]
pub struct ConvergenceReport {
    pub k_max_values: Vec<usize>,
    pub runs: Vec<RunOutput>,
    pub probe_t: f64,
    pub table: Vec<ModeStability>,
    pub n_total_values: Vec<f64>,
    pub total_variation: f64,
    pub stability_threshold: f64,
    /// Smallest sweep cut-off whose reported modes and total all agree with
    /// the largest successful cut-off within the threshold.
    pub recommended_k_max: Option<usize>,
    pub failures: usize,
}

/// Repeats the run for every `sweep.k_max` value and tabulates per-mode
/// stability at the final checkpoint (`converge` subcommand).
pub fn run_convergence(cfg: &RunConfig) -> Result<ConvergenceReport, HarnessError> {
    let mut k_values = cfg.sweep.k_max.clone();
    k_values.sort_unstable();
    k_values.dedup();
    if k_values.len() < 2 {
        return Err(HarnessError::Invalid(
            "convergence sweep needs at least two sweep.k_max values".into(),
        ));
    }
    let overlay = resonant_overlay(cfg);
    let dir = cfg.output.dir.as_deref();
    let mut runs = Vec::with_capacity(k_values.len());
    for &k in &k_values {
        let run = run_with_files(
            cfg,
            k,
            overlay,
            dir,
            &format!("run_k{k}.csv"),
            &format!("summary_k{k}.json"),
        )?;
        runs.push(run);
    }

    let probe_t = cfg.schedule.t_max;
    let reported = cfg.reported_modes(*k_values.first().unwrap());
    let threshold = cfg.report.stability_threshold;

    let mode_value = |run: &RunOutput, idx: usize| -> f64 {
        match run.final_record() {
            Some(rec) if run.completed => rec.n_k[idx],
            _ => f64::NAN,
        }
    };
    let mut table = Vec::with_capacity(reported);
    for idx in 0..reported {
        let n_k: Vec<f64> = runs.iter().map(|r| mode_value(r, idx)).collect();
        let variation = spread(&n_k);
        table.push(ModeStability {
            mode: idx + 1,
            n_k,
            variation,
            stable: variation < threshold,
        });
    }
    let n_total_values: Vec<f64> = runs
        .iter()
        .map(|r| match r.final_record() {
            Some(rec) if r.completed => rec.n_total,
            _ => f64::NAN,
        })
        .collect();
    let total_variation = spread(&n_total_values);

    // Recommend the smallest cut-off that matches the largest successful one
    // on every reported mode and on the total.
    let largest_ok = (0..runs.len()).rev().find(|&i| runs[i].completed);
    let mut recommended = None;
    if let Some(ref_idx) = largest_ok {
        for i in 0..ref_idx {
            if !runs[i].completed {
                continue;
            }
            let modes_ok = table.iter().all(|row| {
                let a = row.n_k[i];
                let b = row.n_k[ref_idx];
                (a - b).abs() < threshold
            });
            let total_ok =
                (n_total_values[i] - n_total_values[ref_idx]).abs() < threshold;
            if modes_ok && total_ok {
                recommended = Some(k_values[i]);
                break;
            }
        }
    }

    let failures = runs.iter().filter(|r| !r.completed).count();
    let report = ConvergenceReport {
        k_max_values: k_values,
        runs,
        probe_t,
        table,
        n_total_values,
        total_variation,
        stability_threshold: threshold,
        recommended_k_max: recommended,
        failures,
    };
    if let Some(dir) = dir {
        write_convergence_files(dir, &report)?;
    }
    Ok(report)
}

fn spread(values: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi >= lo {
        hi - lo
    } else {
        f64::NAN
    }
}

fn write_convergence_files(dir: &Path, report: &ConvergenceReport) -> Result<(), HarnessError> {
    let path = dir.join("convergence.csv");
    let mut out = new_writer(&path)?;
    let io_err = |source| HarnessError::Io {
        path: path.clone(),
        source,
    };
    let mut header = String::from("mode");
    for k in &report.k_max_values {
        header.push_str(&format!(",N_k@k_max={k}"));
    }
    header.push_str(",variation,stable\n");
    out.write_all(header.as_bytes()).map_err(io_err)?;
    for row in &report.table {
        let mut line = format!("{}", row.mode);
        for v in &row.n_k {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(",{},{}\n", row.variation, row.stable as u8));
        out.write_all(line.as_bytes()).map_err(io_err)?;
    }
    let mut total = String::from("total");
    for v in &report.n_total_values {
        total.push_str(&format!(",{v}"));
    }
    total.push_str(&format!(",{},{}\n", report.total_variation, (report.total_variation < report.stability_threshold) as u8));
    out.write_all(total.as_bytes()).map_err(io_err)?;
    out.flush().map_err(io_err)?;

    #[derive(serde::Serialize)]
    struct ConvergenceSummary<'a> {
        k_max_values: &'a [usize],
        probe_t: f64,
        stability_threshold: f64,
        total_variation: f64,
        n_total: &'a [f64],
        unstable_modes: Vec<usize>,
        recommended_k_max: Option<usize>,
        failures: usize,
    }
    let summary = ConvergenceSummary {
        k_max_values: &report.k_max_values,
        probe_t: report.probe_t,
        stability_threshold: report.stability_threshold,
        total_variation: report.total_variation,
        n_total: &report.n_total_values,
        unstable_modes: report
            .table
            .iter()
            .filter(|row| !row.stable)
            .map(|row| row.mode)
            .collect(),
        recommended_k_max: report.recommended_k_max,
        failures: report.failures,
    };
    write_json(&dir.join("convergence.json"), &summary)
}

/// One point of a detuning sweep.
#[derive(Debug)]
pub struct DetunePoint {
    pub n: f64,
    pub delta_n: f64,
    pub gamma: f64,
    pub predicted_period: Option<f64>,
    pub measured_period: Option<f64>,
    pub amplitude: Option<f64>,
    pub period_failure: Option<String>,
    pub output: RunOutput,
}

#[derive(Debug)]
pub struct DetuneReport {
    pub points: Vec<DetunePoint>,
    /// Fitted exponent of `N(t0/2) ∝ (δn)^α` over the oscillatory points.
    pub alpha: Option<f64>,
    pub failures: usize,
}

/// Runs one simulation per `(n, δn)` detuning and measures the oscillation
/// period and amplitude of `N(t)` where the regime is oscillatory
/// (`detune` subcommand). Requires `l0 = 1`, where `ω = 2π(n + δn)`.
pub fn run_detuning_sweep(cfg: &RunConfig) -> Result<DetuneReport, HarnessError> {
    let n = cfg
        .sweep
        .n
        .ok_or_else(|| HarnessError::Invalid("detuning sweep needs sweep.n".into()))?;
    if cfg.sweep.delta_n.is_empty() {
        return Err(HarnessError::Invalid(
            "detuning sweep needs sweep.delta_n values".into(),
        ));
    }
    if (cfg.trajectory.l0 - 1.0).abs() > 1e-12 {
        return Err(HarnessError::Invalid(
            "detuning predictions are normalized to l0 = 1".into(),
        ));
    }
    let dir = cfg.output.dir.as_deref();
    let mut points = Vec::with_capacity(cfg.sweep.delta_n.len());
    for (idx, &delta_n) in cfg.sweep.delta_n.iter().enumerate() {
        let prediction = DetunedPrediction::new(n, delta_n, cfg.trajectory.epsilon);
        let mut point_cfg = cfg.clone();
        point_cfg.trajectory.kind = TrajectoryKind::Sinusoidal;
        point_cfg.trajectory.omega = 2.0 * PI * (n + delta_n);
        let output = run_with_files(
            &point_cfg,
            point_cfg.modes.k_max,
            Some(Overlay::Detuned(prediction)),
            dir,
            &format!("detune_{idx}.csv"),
            &format!("detune_{idx}.json"),
        )?;
        let gamma = prediction.gamma();
        let predicted_period = prediction.period().ok();
        let (measured_period, amplitude, period_failure) = if gamma > 1.0 && output.completed {
            match detect_oscillation(&output.records) {
                Ok((period, amplitude)) => (Some(period), Some(amplitude), None),
                Err(reason) => (None, None, Some(reason)),
            }
        } else {
            (None, None, None)
        };
        points.push(DetunePoint {
            n,
            delta_n,
            gamma,
            predicted_period,
            measured_period,
            amplitude,
            period_failure,
            output,
        });
    }

    let fit_data: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.gamma > 1.0)
        .filter_map(|p| p.amplitude.map(|a| (p.delta_n, a)))
        .collect();
    let alpha = fit_power_law(&fit_data);
    let failures = points
        .iter()
        .filter(|p| !p.output.completed || p.period_failure.is_some())
        .count();
    let report = DetuneReport {
        points,
        alpha,
        failures,
    };
    if let Some(dir) = dir {
        write_detune_files(dir, &report)?;
    }
    Ok(report)
}

fn write_detune_files(dir: &Path, report: &DetuneReport) -> Result<(), HarnessError> {
    let path = dir.join("amplitudes.csv");
    let mut out = new_writer(&path)?;
    let io_err = |source| HarnessError::Io {
        path: path.clone(),
        source,
    };
    out.write_all(b"delta_n,gamma,period_predicted,period_measured,amplitude\n")
        .map_err(io_err)?;
    for p in &report.points {
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.write_all(
            format!(
                "{},{},{},{},{}\n",
                p.delta_n,
                p.gamma,
                fmt_opt(p.predicted_period),
                fmt_opt(p.measured_period),
                fmt_opt(p.amplitude)
            )
            .as_bytes(),
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;

    #[derive(serde::Serialize)]
    struct DetuneSummary {
        points: Vec<DetunePointSummary>,
        alpha: Option<f64>,
        failures: usize,
    }
    #[derive(serde::Serialize)]
    struct DetunePointSummary {
        n: f64,
        delta_n: f64,
        gamma: f64,
        period_predicted: Option<f64>,
        period_measured: Option<f64>,
        amplitude: Option<f64>,
        completed: bool,
        period_failure: Option<String>,
    }
    let summary = DetuneSummary {
        points: report
            .points
            .iter()
            .map(|p| DetunePointSummary {
                n: p.n,
                delta_n: p.delta_n,
                gamma: p.gamma,
                period_predicted: p.predicted_period,
                period_measured: p.measured_period,
                amplitude: p.amplitude,
                completed: p.output.completed,
                period_failure: p.period_failure.clone(),
            })
            .collect(),
        alpha: report.alpha,
        failures: report.failures,
    };
    write_json(&dir.join("detune_summary.json"), &summary)
}

/// Measures the oscillation period and peak amplitude of `N(t)` from a
/// checkpoint series: successive minima are located on the grid, refined
/// parabolically (the grid is coarse relative to the period), and the
/// amplitude is the refined maximum between the first two minima.
pub fn detect_oscillation(records: &[ObservableRecord]) -> Result<(f64, f64), String> {
    let n: Vec<f64> = records.iter().map(|r| r.n_total).collect();
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    if n.len() < 5 {
        return Err("series too short for period detection".into());
    }
    let peak = n.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err("series has no oscillation amplitude".into());
    }
    // Candidate minima: interior grid minima well below the peak.
    let mut candidates: Vec<usize> = Vec::new();
    for i in 1..n.len() - 1 {
        if n[i] <= n[i - 1] && n[i] <= n[i + 1] && n[i] < 0.25 * peak {
            candidates.push(i);
        }
    }
    // Merge neighbouring candidates, keeping the deepest of each cluster.
    let mut minima: Vec<usize> = Vec::new();
    for idx in candidates {
        match minima.last() {
            Some(&prev) if idx - prev <= 3 => {
                if n[idx] < n[prev] {
                    *minima.last_mut().unwrap() = idx;
                }
            }
            _ => minima.push(idx),
        }
    }
    if minima.len() < 2 {
        return Err(format!(
            "found {} minima; too few oscillations within t_max",
            minima.len()
        ));
    }
    let refine = |i: usize| -> f64 {
        let denom = n[i - 1] - 2.0 * n[i] + n[i + 1];
        if denom.abs() < 1e-300 {
            return t[i];
        }
        let dt = 0.5 * (t[i + 1] - t[i - 1]);
        t[i] + 0.5 * dt * (n[i - 1] - n[i + 1]) / denom
    };
    let refined: Vec<f64> = minima.iter().map(|&i| refine(i)).collect();
    let mut period = 0.0;
    for w in refined.windows(2) {
        period += w[1] - w[0];
    }
    period /= (refined.len() - 1) as f64;

    // Amplitude: refined maximum between the first two minima.
    let (lo, hi) = (minima[0], minima[1]);
    let mut arg = lo;
    for i in lo..=hi {
        if n[i] > n[arg] {
            arg = i;
        }
    }
    let amplitude = if arg > 0 && arg + 1 < n.len() {
        let denom = n[arg - 1] - 2.0 * n[arg] + n[arg + 1];
        if denom.abs() < 1e-300 {
            n[arg]
        } else {
            n[arg] - 0.125 * (n[arg + 1] - n[arg - 1]).powi(2) / denom
        }
    } else {
        n[arg]
    };
    Ok((period, amplitude))
}

/// Least-squares slope of `ln y` against `ln x`; `None` below two points.
pub fn fit_power_law(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|(x, _)| x).sum();
    let sy: f64 = logs.iter().map(|(_, y)| y).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

// ---------------------------------------------------------------------------
// Output plumbing.

/// Streaming CSV writer with the fixed column order
/// `t,N_total,E_total,max_abs_d,wall_moving,N_1..N_K[,N_pred,E_pred]`.
struct CsvWriter {
    out: BufWriter<File>,
    path: PathBuf,
    k_report: usize,
    overlay: Option<Overlay>,
}

impl CsvWriter {
    fn create(
        path: PathBuf,
        k_report: usize,
        overlay: Option<Overlay>,
    ) -> Result<Self, HarnessError> {
        let mut writer = CsvWriter {
            out: new_writer(&path)?,
            path,
            k_report,
            overlay,
        };
        let mut header = String::from("t,N_total,E_total,max_abs_d,wall_moving");
        for k in 1..=writer.k_report {
            header.push_str(&format!(",N_{k}"));
        }
        if writer.overlay.is_some() {
            header.push_str(",N_pred,E_pred");
        }
        header.push('\n');
        writer.write_bytes(header.as_bytes())?;
        Ok(writer)
    }

    fn write_record(&mut self, rec: &ObservableRecord) -> Result<(), HarnessError> {
        let mut line = format!(
            "{},{},{},{},{}",
            rec.t,
            rec.n_total,
            rec.e_total,
            rec.max_abs_d,
            rec.wall_moving as u8
        );
        for k in 0..self.k_report {
            line.push_str(&format!(",{}", rec.n_k[k]));
        }
        if let Some(overlay) = &self.overlay {
            let (n_pred, e_pred) = overlay.columns(rec.t);
            line.push_str(&format!(",{n_pred},{e_pred}"));
        }
        line.push('\n');
        self.write_bytes(line.as_bytes())?;
        // One row per checkpoint lands on disk before the next segment runs.
        let path = self.path.clone();
        self.out
            .flush()
            .map_err(|source| HarnessError::Io { path, source })
    }

    fn write_bytes(&mut self, bytes: &[u8]) -> Result<(), HarnessError> {
        let path = self.path.clone();
        self.out
            .write_all(bytes)
            .map_err(|source| HarnessError::Io { path, source })
    }
}

fn new_writer(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("summary serialization");
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(serde::Serialize)]
struct RunSummary {
    completed: bool,
    failure: Option<String>,
    k_max: usize,
    method: String,
    abs_tol: f64,
    rel_tol: f64,
    t_final: Option<f64>,
    n_total: Option<f64>,
    e_total: Option<f64>,
    max_abs_d_final: Option<f64>,
    max_abs_d_overall: f64,
    max_offdiag_overall: f64,
    wall_moving_at_final: Option<bool>,
    stats: Stats,
}

impl RunSummary {
    fn from_output(cfg: &RunConfig, output: &RunOutput) -> Self {
        let last = output.final_record();
        RunSummary {
            completed: output.completed,
            failure: output.failure.clone(),
            k_max: output.k_max,
            method: cfg.integrator.method.to_string(),
            abs_tol: cfg.integrator.abs_tol,
            rel_tol: cfg.integrator.rel_tol,
            t_final: last.map(|r| r.t),
            n_total: last.map(|r| r.n_total),
            e_total: last.map(|r| r.e_total),
            max_abs_d_final: last.map(|r| r.max_abs_d),
            max_abs_d_overall: output
                .records
                .iter()
                .fold(0.0, |acc, r| acc.max(r.max_abs_d)),
            max_offdiag_overall: output
                .records
                .iter()
                .fold(0.0, |acc, r| acc.max(r.max_offdiag)),
            wall_moving_at_final: last.map(|r| r.wall_moving),
            stats: output.stats,
        }
    }
}
