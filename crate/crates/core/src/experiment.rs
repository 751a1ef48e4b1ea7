// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Experiment commands and the files they write.
//!
//! `cmd_train` writes into the configured output directory:
//!
//! | file                | contents                                                   |
//! |---------------------|------------------------------------------------------------|
//! | `training_log.csv`  | one row per epoch, deterministic for a given config        |
//! | `timing.csv`        | `epoch,wall_clock` (the only run-to-run varying output)     |
//! | `best_schedule.csv` | `step,t,omega_1..omega_L` of the best episode              |
//! | `checkpoints/`      | `best.ckpt`, `epoch_XXXXX.ckpt`, `final.ckpt`               |
//! | `run_config.toml`   | resolved config, loadable with `--config`                  |
//! | `manifest.json`     | config echo, seed, versions, status and results            |

use std::fmt;
use std::fs::File;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{config_err, ExperimentConfig};
use crate::control::{state_fidelity, Environment};
use crate::diagnostics::{self, Subsystem, WignerGrid, WignerGridSpec};
use crate::dynamics::{evolve_episode_with, write_trajectory_csv, DensityMatrix, PulseSchedule, TrajectoryRow};
use crate::error::{Error, Result};
use crate::hilbert::{carrier_detunings, validate_offresonance, DetuningSet, OffResonanceReport, SystemKind};
use crate::rl::{self, Agent, Checkpoint, EpochRecord};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffResonanceSummary {
    pub margin: f64,
    pub omega_max: f64,
    pub worst_ratio: f64,
    pub pass: bool,
}

impl From<&OffResonanceReport> for OffResonanceSummary {
    fn from(r: &OffResonanceReport) -> Self {
        OffResonanceSummary {
            margin: r.margin,
            omega_max: r.omega_max,
            worst_ratio: r.worst_ratio,
            pass: r.pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResults {
    pub epochs_run: usize,
    pub best_fidelity: f64,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Everything needed to rerun a training job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub checkpoint_format: u32,
    pub command: String,
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub offresonance: OffResonanceSummary,
    pub results: Option<TrainResults>,
    /// Files written so far, relative to the output directory.
    pub artifacts: Vec<String>,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| config_err("<manifest>", e.to_string()))
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| config_err("<manifest>", e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub results: TrainResults,
    pub best_schedule: PulseSchedule,
    pub checkpoints: Vec<PathBuf>,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Serialize)]
struct LogRow {
    epoch: usize,
    episode_reward: f64,
    episode_fidelity: f64,
    best_fidelity: f64,
    noise_sigma: f64,
    updates: usize,
    critic_loss: f64,
}

#[derive(Serialize)]
struct TimingRow {
    epoch: usize,
    wall_clock: f64,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    cmd_train_with(cfg, |_| ControlFlow::Continue(()))
}

/// [`cmd_train`] with a per-epoch callback that may stop training early.
pub fn cmd_train_with(
    cfg: &ExperimentConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> ControlFlow<()>,
) -> Result<TrainSummary> {
    cfg.validate()?;
    let sys = cfg.system_config()?;
    let target = cfg.target_spec()?;
    let spec = cfg.episode_spec()?;
    let dir = cfg.output.dir.clone();
    let ckpt_dir = dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;

    let detunings = carrier_detunings(&target, &sys)?;
    let report = validate_offresonance(spec.omega_max, &sys, &detunings, crate::hilbert::DEFAULT_OFFRESONANCE_MARGIN);
    let mut manifest = RunManifest {
        tool: "optomech".into(),
        version: VERSION.into(),
        checkpoint_format: rl::checkpoint::CHECKPOINT_VERSION,
        command: "train".into(),
        seed: cfg.rl.seed,
        status: RunStatus::Running,
        error: None,
        offresonance: (&report).into(),
        results: None,
        artifacts: vec!["run_config.toml".into(), "training_log.csv".into(), "timing.csv".into()],
        config: cfg.clone(),
    };
    let manifest_path = dir.join("manifest.json");
    write_text(&dir.join("run_config.toml"), &cfg.to_toml()?)?;
    manifest.write(&manifest_path)?;

    let outcome = (|| -> Result<TrainSummary> {
        let log_path = dir.join("training_log.csv");
        let timing_path = dir.join("timing.csv");
        let mut log = csv::Writer::from_writer(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
        let mut timing = csv::Writer::from_writer(File::create(&timing_path).map_err(|e| Error::io(&timing_path, e))?);
        let mut write_err: Option<Error> = None;
        let mut env = Environment::new(sys.clone(), target.clone(), spec)?;
        let report = rl::train_with(&mut env, &cfg.rl, Some(&ckpt_dir), |rec| {
            let written = log
                .serialize(LogRow {
                    epoch: rec.epoch,
                    episode_reward: rec.episode_reward,
                    episode_fidelity: rec.episode_fidelity,
                    best_fidelity: rec.best_fidelity,
                    noise_sigma: rec.noise_sigma,
                    updates: rec.updates,
                    critic_loss: rec.critic_loss,
                })
                .and_then(|_| {
                    timing.serialize(TimingRow {
                        epoch: rec.epoch,
                        wall_clock: rec.wall_clock,
                    })
                })
                .map_err(Error::from)
                .and_then(|_| log.flush().map_err(|e| Error::io(&log_path, e)))
                .and_then(|_| timing.flush().map_err(|e| Error::io(&timing_path, e)));
            if let Err(e) = written {
                write_err = Some(e);
                return ControlFlow::Break(());
            }
            on_epoch(rec)
        })?;
        if let Some(e) = write_err {
            return Err(e);
        }
        write_schedule_csv(&dir.join("best_schedule.csv"), &report.best_schedule)?;
        Ok(TrainSummary {
            out_dir: dir.clone(),
            results: TrainResults {
                epochs_run: report.epochs.len(),
                best_fidelity: report.best_fidelity,
                best_epoch: report.best_epoch,
                stopped_early: report.stopped_early,
            },
            best_schedule: report.best_schedule,
            checkpoints: report.checkpoints,
            epochs: report.epochs,
        })
    })();

    let mut ckpts: Vec<String> = std::fs::read_dir(&ckpt_dir)
        .map_err(|e| Error::io(&ckpt_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| format!("checkpoints/{}", e.file_name().to_string_lossy()))
        .collect();
    ckpts.sort();
    manifest.artifacts.extend(ckpts);
    match &outcome {
        Ok(summary) => {
            manifest.status = RunStatus::Complete;
            manifest.results = Some(summary.results.clone());
            manifest.artifacts.push("best_schedule.csv".into());
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
        }
    }
    manifest.write(&manifest_path)?;
    outcome
}

/// Writes `step,t,omega_1..omega_L`; `t` is the start of each step.
pub fn write_schedule_csv(path: &Path, sched: &PulseSchedule) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step".to_string(), "t".to_string()];
    header.extend((1..=sched.pulses()).map(|l| format!("omega_{l}")));
    w.write_record(&header)?;
    for (s, amps) in sched.amplitudes().iter().enumerate() {
        let mut row = vec![s.to_string(), sched.time_of(s).to_string()];
        row.extend(amps.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a schedule written by [`write_schedule_csv`] onto the grid
/// `total_time / rows`.
pub fn read_schedule_csv(path: &Path, detunings: DetuningSet, total_time: f64, omega_max: f64) -> Result<PulseSchedule> {
    let mut r = csv::Reader::from_path(path)?;
    let pulses = detunings.len();
    let width = r.headers()?.len();
    if width != pulses + 2 {
        return Err(Error::shape(
            format!("{} columns (step, t, {pulses} pulses)", pulses + 2),
            format!("{width} columns in {}", path.display()),
        ));
    }
    let mut amps = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec[k].trim().parse::<f64>().map_err(|_| config_err(format!("{}:{}", path.display(), i + 2), format!("not a number: {:?}", &rec[k])))
        };
        if parse(0)? != i as f64 {
            return Err(config_err(format!("{}:{}", path.display(), i + 2), "steps must be 0, 1, 2, ... in order"));
        }
        amps.push((2..width).map(parse).collect::<Result<Vec<_>>>()?);
    }
    PulseSchedule::new(detunings, amps, total_time, omega_max)
}

/// Where the pulses to evaluate come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSource {
    Schedule(PathBuf),
    /// Greedy (noise-free) rollout of the checkpoint's actor.
    Checkpoint(PathBuf),
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationSummary {
    pub final_fidelity: f64,
    pub max_trace_error: f64,
    pub final_purity: f64,
    /// Final mechanical log-negativity for two-mode systems.
    pub final_log_negativity: Option<f64>,
    pub offresonance: OffResonanceSummary,
    pub artifacts: Vec<String>,
}

/// Resolves a source into a schedule on the config's grid.
pub fn load_schedule(cfg: &ExperimentConfig, source: &ScheduleSource) -> Result<PulseSchedule> {
    let sys = cfg.system_config()?;
    let target = cfg.target_spec()?;
    let spec = cfg.episode_spec()?;
    let detunings = carrier_detunings(&target, &sys)?;
    match source {
        ScheduleSource::Zero => PulseSchedule::zeros(detunings, spec.steps, spec.total_time, spec.omega_max),
        ScheduleSource::Schedule(path) => {
            let s = read_schedule_csv(path, detunings, spec.total_time, spec.omega_max)?;
            if s.steps() != spec.steps {
                return Err(Error::shape(format!("{} steps", spec.steps), format!("{} rows in {}", s.steps(), path.display())));
            }
            Ok(s)
        }
        ScheduleSource::Checkpoint(path) => {
            let ckpt = Checkpoint::load(path)?;
            let (d, l) = (ckpt.header.joint_dim as usize, ckpt.header.pulses as usize);
            if d != sys.dim() || l != detunings.len() {
                return Err(Error::shape(
                    format!("D = {}, L = {}", sys.dim(), detunings.len()),
                    format!("checkpoint with D = {d}, L = {l}"),
                ));
            }
            let agent = Agent::from_networks(ckpt.actor, ckpt.critic, spec.omega_max, &cfg.rl)?;
            let mut env = Environment::new(sys, target, spec)?;
            let mut obs = env.reset();
            while !env.is_done() {
                let action = agent.act(&obs)?;
                obs = env.step(&action)?.observation;
            }
            Ok(env.schedule().clone())
        }
    }
}

#[derive(Serialize)]
struct NegativityRow {
    step: usize,
    t: f64,
    log_negativity: f64,
}

/// Replays a schedule without noise and writes `evaluation.csv`,
/// `schedule.csv`, `fock_map.csv`, `evaluation.json` and, depending on the
/// system, `wigner.csv` + `wigner_target.csv` or `log_negativity.csv`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, source: &ScheduleSource, out_dir: &Path) -> Result<EvaluationSummary> {
    cfg.validate()?;
    let sys = cfg.system_config()?;
    let target = cfg.target_spec()?;
    let spec = cfg.episode_spec()?;
    let sched = load_schedule(cfg, source)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let traj = evolve_episode_with(&DensityMatrix::ground(&sys), &sched, &sys, true, spec.integrator)?;
    let mut rows = Vec::with_capacity(traj.states.len());
    let mut negativity = Vec::new();
    for (k, (rho, &t)) in traj.states.iter().zip(&traj.times).enumerate() {
        rows.push(TrajectoryRow {
            step: k,
            t,
            trace_error: rho.trace_error(),
            fidelity: state_fidelity(rho, &target, spec.fidelity)?,
            purity: rho.purity(),
        });
        if sys.kind() == SystemKind::Double {
            let rho_b = diagnostics::partial_trace(rho, Subsystem::Mechanics)?;
            negativity.push(NegativityRow {
                step: k,
                t,
                log_negativity: diagnostics::log_negativity(&rho_b)?,
            });
        }
    }
    let mut artifacts = vec!["evaluation.csv".to_string(), "schedule.csv".into(), "fock_map.csv".into()];
    write_trajectory_csv(&out_dir.join("evaluation.csv"), &rows)?;
    write_schedule_csv(&out_dir.join("schedule.csv"), &sched)?;
    let rho_b = diagnostics::partial_trace(traj.final_state(), Subsystem::Mechanics)?;
    diagnostics::write_matrix_map_csv(&out_dir.join("fock_map.csv"), &diagnostics::fock_matrix_map(&rho_b))?;
    if sys.kind() == SystemKind::Single {
        let grid = WignerGridSpec::default();
        diagnostics::write_wigner_csv(&out_dir.join("wigner.csv"), &diagnostics::wigner(&rho_b, &grid)?)?;
        let ideal = DensityMatrix::pure(&target.state_vector(&sys.mech_dims())?, sys.mech_dims())?;
        diagnostics::write_wigner_csv(&out_dir.join("wigner_target.csv"), &diagnostics::wigner(&ideal, &grid)?)?;
        artifacts.extend(["wigner.csv".into(), "wigner_target.csv".into()]);
    } else {
        let path = out_dir.join("log_negativity.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for r in &negativity {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        artifacts.push("log_negativity.csv".into());
    }
    let report = validate_offresonance(
        sched.peak_amplitude(),
        &sys,
        sched.detunings(),
        crate::hilbert::DEFAULT_OFFRESONANCE_MARGIN,
    );
    let last = rows.last().expect("trajectory is never empty");
    artifacts.push("evaluation.json".into());
    let summary = EvaluationSummary {
        final_fidelity: last.fidelity,
        max_trace_error: rows.iter().map(|r| r.trace_error).fold(0.0, f64::max),
        final_purity: last.purity,
        final_log_negativity: negativity.last().map(|r| r.log_negativity),
        offresonance: (&report).into(),
        artifacts,
    };
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| config_err("<evaluation>", e.to_string()))?;
    text.push('\n');
    write_text(&out_dir.join("evaluation.json"), &text)?;
    Ok(summary)
}

/// Parameter varied by [`cmd_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Kappa,
    /// Applied to every mechanical mode.
    GammaM,
    /// Applied to every mechanical mode.
    NTh,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Kappa => "kappa",
            SweepParameter::GammaM => "gamma_m",
            SweepParameter::NTh => "n_th",
        }
    }

    /// Copy of `cfg` with this parameter set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> ExperimentConfig {
        let mut c = cfg.clone();
        let double = c.system.kind == SystemKind::Double;
        match self {
            SweepParameter::Kappa => c.system.kappa = Some(value),
            SweepParameter::GammaM => {
                c.system.gamma_m = Some(value);
                if double {
                    c.system.gamma_m2 = Some(value);
                }
            }
            SweepParameter::NTh => {
                c.system.n_th = Some(value);
                if double {
                    c.system.n_th2 = Some(value);
                }
            }
        }
        c
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kappa" => Ok(SweepParameter::Kappa),
            "gamma_m" | "gamma_M" => Ok(SweepParameter::GammaM),
            "n_th" => Ok(SweepParameter::NTh),
            other => Err(config_err("parameter", format!("unknown sweep parameter {other:?}, expected kappa, gamma_m or n_th"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub best_fidelity: f64,
}

/// Trains once per value with the config's seed. Run `i` goes to
/// `<out>/<parameter>_<i>` and the table to `<out>/sweep_<parameter>.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig, parameter: SweepParameter, values: &[f64]) -> Result<Vec<SweepPoint>> {
    if values.len() < 2 {
        return Err(config_err("values", format!("a sweep needs at least two values, got {}", values.len())));
    }
    let runs: Vec<ExperimentConfig> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut c = parameter.apply(cfg, v);
            c.output.dir = cfg.output.dir.join(format!("{parameter}_{i}"));
            c.validate().map(|_| c)
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(values.len());
    for (c, &value) in runs.iter().zip(values) {
        let summary = cmd_train(c)?;
        points.push(SweepPoint {
            value,
            best_fidelity: summary.results.best_fidelity,
        });
    }
    let path = cfg.output.dir.join(format!("sweep_{parameter}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    for p in &points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(points)
}

/// Wigner function of the final mechanical state of a schedule, or of the
/// ideal target when no schedule is given. Single-resonator systems only.
pub fn cmd_wigner(cfg: &ExperimentConfig, source: Option<&ScheduleSource>, grid: &WignerGridSpec, out: &Path) -> Result<WignerGrid> {
    cfg.validate()?;
    let sys = cfg.system_config()?;
    if sys.kind() != SystemKind::Single {
        return Err(config_err("system.kind", "Wigner grids are computed for single-resonator systems"));
    }
    let rho_b = match source {
        None => DensityMatrix::pure(&cfg.target_spec()?.state_vector(&sys.mech_dims())?, sys.mech_dims())?,
        Some(src) => {
            let sched = load_schedule(cfg, src)?;
            let spec = cfg.episode_spec()?;
            let traj = evolve_episode_with(&DensityMatrix::ground(&sys), &sched, &sys, false, spec.integrator)?;
            diagnostics::partial_trace(traj.final_state(), Subsystem::Mechanics)?
        }
    };
    let w = diagnostics::wigner(&rho_b, grid)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    diagnostics::write_wigner_csv(out, &w)?;
    Ok(w)
}

/// Off-resonance check at the schedule's peak amplitude, or at the
/// configured bound when no schedule is given.
pub fn cmd_validate(cfg: &ExperimentConfig, source: Option<&ScheduleSource>, margin: f64) -> Result<OffResonanceReport> {
    cfg.validate()?;
    if !(margin.is_finite() && margin > 0.0) {
        return Err(config_err("margin", format!("expected a finite number > 0, got {margin}")));
    }
    let sys = cfg.system_config()?;
    let detunings = carrier_detunings(&cfg.target_spec()?, &sys)?;
    let omega = match source {
        None => cfg.omega_max()?,
        Some(src) => load_schedule(cfg, src)?.peak_amplitude(),
    };
    Ok(validate_offresonance(omega, &sys, &detunings, margin))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
