// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! `optomech` command-line driver.
//!
//! Exit codes: 0 success, 2 config error, 3 physics-invariant violation
//! (including a failed off-resonance check), 4 I/O error, 1 anything else.

use std::ops::ControlFlow;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use optomech_core::config::{load_config, preset, ExperimentConfig, PRESETS};
use optomech_core::diagnostics::WignerGridSpec;
use optomech_core::experiment::{
    cmd_evaluate, cmd_sweep, cmd_train_with, cmd_validate, cmd_wigner, ScheduleSource, SweepParameter,
};
use optomech_core::hilbert::DEFAULT_OFFRESONANCE_MARGIN;
use optomech_core::Error;

#[derive(Parser, Debug)]
#[command(name = "optomech", version, about = "Pulse-controlled mechanical state preparation in optomechanics")]
struct Cli {
    /// TOML config, or a run manifest (.json) to re-execute.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in parameter set.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Number of control steps; the total time is kept.
    #[arg(long, global = true, value_name = "N")]
    steps_override: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    epochs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a pulse policy and write logs, checkpoints and the best schedule.
    Train {
        /// Stop once an episode reaches this final-state fidelity.
        #[arg(long, value_name = "F")]
        stop_at: Option<f64>,
        /// Print a progress line every N epochs (0 silences).
        #[arg(long, default_value_t = 10)]
        progress: usize,
    },
    /// Replay a schedule or checkpoint without noise and write diagnostics.
    Evaluate {
        #[command(flatten)]
        source: SourceArgs,
        /// Defaults to `<out>/eval`.
        #[arg(long, value_name = "DIR")]
        eval_dir: Option<PathBuf>,
    },
    /// Train once per value of a dissipation parameter.
    Sweep {
        /// kappa, gamma_m or n_th.
        #[arg(long)]
        parameter: String,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// Wigner grid of a final state, or of the target without a source.
    Wigner {
        #[command(flatten)]
        source: SourceArgs,
        /// Half-width of the square phase-space window.
        #[arg(long, default_value_t = 4.0)]
        extent: f64,
        #[arg(long, default_value_t = 81)]
        points: usize,
        /// Defaults to `<out>/wigner.csv`.
        #[arg(long, value_name = "PATH")]
        file: Option<PathBuf>,
    },
    /// Check the off-resonance condition at a schedule's peak amplitude.
    Validate {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = DEFAULT_OFFRESONANCE_MARGIN)]
        margin: f64,
    },
}

#[derive(Args, Debug)]
struct SourceArgs {
    /// Schedule CSV (step,t,omega_1..).
    #[arg(long, value_name = "PATH", conflicts_with_all = ["checkpoint", "zero"])]
    schedule: Option<PathBuf>,
    /// Checkpoint whose actor is rolled out greedily.
    #[arg(long, value_name = "PATH", conflicts_with = "zero")]
    checkpoint: Option<PathBuf>,
    /// All-zero schedule.
    #[arg(long)]
    zero: bool,
}

impl SourceArgs {
    fn source(&self) -> Option<ScheduleSource> {
        if let Some(p) = &self.schedule {
            Some(ScheduleSource::Schedule(p.clone()))
        } else if let Some(p) = &self.checkpoint {
            Some(ScheduleSource::Checkpoint(p.clone()))
        } else if self.zero {
            Some(ScheduleSource::Zero)
        } else {
            None
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config_error() {
        2
    } else if e.is_physics_violation() {
        3
    } else if matches!(e, Error::Io { .. } | Error::Csv(_) | Error::Checkpoint(_)) {
        4
    } else {
        1
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => {
            return Err(Error::Config {
                key: "--config/--preset".into(),
                reason: format!("one is required; presets: {}", PRESETS.join(", ")),
            })
        }
    };
    if let Some(seed) = cli.seed {
        cfg.rl.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(steps) = cli.steps_override {
        cfg.schedule.steps = steps;
    }
    if let Some(epochs) = cli.epochs {
        cfg.rl.epochs = epochs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, Error> {
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Train { stop_at, progress } => {
            let s = cmd_train_with(&cfg, |rec| {
                if progress > 0 && (rec.epoch + 1) % progress == 0 {
                    eprintln!(
                        "epoch {:>5}  F = {:.4}  best = {:.4}  sigma = {:.4}  t = {:.0}s",
                        rec.epoch + 1,
                        rec.episode_fidelity,
                        rec.best_fidelity,
                        rec.noise_sigma,
                        rec.wall_clock
                    );
                }
                match stop_at {
                    Some(f) if rec.episode_fidelity >= f => ControlFlow::Break(()),
                    _ => ControlFlow::Continue(()),
                }
            })?;
            println!(
                "best fidelity {:.6} at epoch {} ({} epochs run), outputs in {}",
                s.results.best_fidelity,
                s.results.best_epoch,
                s.results.epochs_run,
                s.out_dir.display()
            );
        }
        Command::Evaluate { source, eval_dir } => {
            let src = source.source().ok_or_else(|| Error::Config {
                key: "--schedule/--checkpoint/--zero".into(),
                reason: "one schedule source is required".into(),
            })?;
            let dir = eval_dir.unwrap_or_else(|| cfg.output.dir.join("eval"));
            let e = cmd_evaluate(&cfg, &src, &dir)?;
            print!("final fidelity {:.9}, max trace error {:.3e}", e.final_fidelity, e.max_trace_error);
            if let Some(n) = e.final_log_negativity {
                print!(", log-negativity {n:.6}");
            }
            println!(", outputs in {}", dir.display());
        }
        Command::Sweep { parameter, values } => {
            let p: SweepParameter = parameter.parse()?;
            for point in cmd_sweep(&cfg, p, &values)? {
                println!("{p} = {}  best fidelity {:.6}", point.value, point.best_fidelity);
            }
        }
        Command::Wigner { source, extent, points, file } => {
            let spec = WignerGridSpec {
                re_min: -extent,
                re_max: extent,
                im_min: -extent,
                im_max: extent,
                n_re: points,
                n_im: points,
            };
            let path = file.unwrap_or_else(|| cfg.output.dir.join("wigner.csv"));
            let w = cmd_wigner(&cfg, source.source().as_ref(), &spec, &path)?;
            println!("wrote {} ({} x {}, integral {:.6})", path.display(), points, points, w.integral());
        }
        Command::Validate { source, margin } => {
            let r = cmd_validate(&cfg, source.source().as_ref(), margin)?;
            println!(
                "{}: worst ratio {:.4} vs margin {} at omega = {} (largest compliant amplitude {:.5})",
                if r.pass { "pass" } else { "FAIL" },
                r.worst_ratio,
                r.margin,
                r.omega_max,
                r.max_compliant_amplitude()
            );
            if let Some(w) = &r.worst {
                println!(
                    "worst transition: pulse {} |2,{:?}> <-> |1,{:?}>, detuning {:.6}, coefficient {:.6}",
                    w.pulse + 1,
                    w.upper,
                    w.lower,
                    w.detuning,
                    w.coefficient
                );
            }
            if !r.pass {
                return Ok(3);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
