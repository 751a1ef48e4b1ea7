// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Episodic DDPG training loop.

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{select_action, update_networks, Agent, ExplorationNoise};
use super::checkpoint::Checkpoint;
use super::replay::{pack_observation, ReplayBuffer, Transition};
use super::Hyperparameters;
use crate::control::{EpisodeSpec, Environment, TargetSpec};
use crate::dynamics::PulseSchedule;
use crate::error::{Error, Result};
use crate::hilbert::SystemConfig;

/// Summary of one training episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sum of the per-step rewards.
    pub episode_reward: f64,
    /// Fidelity of the state at the end of the episode.
    pub episode_fidelity: f64,
    /// Running maximum of `episode_fidelity`.
    pub best_fidelity: f64,
    /// Exploration scale used in this epoch, physical units.
    pub noise_sigma: f64,
    pub updates: usize,
    /// Mean critic loss over this epoch's updates (0 without updates).
    pub critic_loss: f64,
    /// Seconds since training started, at the end of the epoch.
    pub wall_clock: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub seed: u64,
    pub hyper: Hyperparameters,
    pub epochs: Vec<EpochRecord>,
    pub best_fidelity: f64,
    pub best_epoch: usize,
    /// Amplitudes of the episode that reached `best_fidelity`.
    pub best_schedule: PulseSchedule,
    pub checkpoints: Vec<PathBuf>,
    /// True when the epoch callback ended training before `hyper.epochs`.
    pub stopped_early: bool,
    pub wall_clock: f64,
    pub agent: Agent,
}

/// Runs `hyper.epochs` episodes on a fresh environment.
pub fn train(
    cfg: &SystemConfig,
    target: &TargetSpec,
    episode: &EpisodeSpec,
    hyper: &Hyperparameters,
) -> Result<TrainingReport> {
    let mut env = Environment::new(cfg.clone(), target.clone(), *episode)?;
    train_with(&mut env, hyper, None, |_| ControlFlow::Continue(()))
}

/// Training loop with optional checkpoint directory and an epoch callback
/// that may stop training early.
///
/// Checkpoints are written as `epoch_XXXXX.ckpt` every
/// `hyper.checkpoint_every` epochs, `best.ckpt` whenever the best fidelity
/// improves and `final.ckpt` at the end.
pub fn train_with(
    env: &mut Environment,
    hyper: &Hyperparameters,
    checkpoint_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord) -> ControlFlow<()>,
) -> Result<TrainingReport> {
    hyper.validate()?;
    let start = Instant::now();
    let omega_max = env.omega_max();
    let joint_dim = env.config().dim();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut agent = Agent::new(env.obs_dim(), env.action_dim(), omega_max, hyper, &mut rng)?;
    let mut buffer = ReplayBuffer::new(hyper.capacity)?;
    let noise = ExplorationNoise {
        sigma: hyper.noise_sigma * omega_max,
        decay: hyper.noise_decay,
    };

    let mut records = Vec::with_capacity(hyper.epochs);
    let mut best_fidelity = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_schedule = env.schedule().clone();
    let mut checkpoints = Vec::new();
    let mut stopped_early = false;
    let save = |agent: &Agent, epoch: usize, name: String, list: &mut Vec<PathBuf>| -> Result<()> {
        if let Some(dir) = checkpoint_dir {
            let path = dir.join(name);
            Checkpoint::new(joint_dim, hyper.seed, epoch, omega_max, agent.actor.clone(), agent.critic.clone())
                .save(&path)?;
            if !list.contains(&path) {
                list.push(path);
            }
        }
        Ok(())
    };

    for epoch in 0..hyper.epochs {
        let obs = env.reset();
        let mut packed = pack_observation(&obs)?;
        let mut obs32: Vec<f32> = obs.iter().map(|&v| v as f32).collect();
        let mut episode_reward = 0.0;
        let mut loss_sum = 0.0;
        let mut updates = 0;
        while !env.is_done() {
            let action = select_action(&agent.actor, &obs32, &noise, epoch, hyper.warmup_epochs, omega_max, &mut rng)?;
            let out = env.step(&action).map_err(|e| annotate(e, epoch, env.step_index()))?;
            let next_packed = pack_observation(&out.observation)?;
            buffer.push(Transition {
                obs: packed,
                action: env.schedule().amplitudes()[env.step_index() - 1].iter().map(|&a| a as f32).collect(),
                reward: out.reward as f32,
                next_obs: next_packed.clone(),
            });
            episode_reward += out.reward;
            if epoch >= hyper.warmup_epochs && buffer.len() >= hyper.batch_size {
                let batch = buffer.sample_batch(hyper.batch_size, omega_max, &mut rng)?;
                let losses = update_networks(&mut agent, &batch, hyper.tau, hyper.gamma_discount)?;
                loss_sum += losses.critic;
                updates += 1;
            }
            packed = next_packed;
            obs32 = out.observation.iter().map(|&v| v as f32).collect();
        }
        if !(agent.actor.is_finite() && agent.critic.is_finite()) {
            return Err(Error::InvariantViolation {
                t: epoch as f64,
                what: "network parameters became non-finite".into(),
            });
        }

        let fidelity = env.fidelity();
        if fidelity > best_fidelity {
            best_fidelity = fidelity;
            best_epoch = epoch;
            best_schedule = env.schedule().clone();
            save(&agent, epoch, "best.ckpt".into(), &mut checkpoints)?;
        }
        if hyper.checkpoint_every > 0 && (epoch + 1) % hyper.checkpoint_every == 0 {
            save(&agent, epoch, format!("epoch_{:05}.ckpt", epoch + 1), &mut checkpoints)?;
        }
        let record = EpochRecord {
            epoch,
            episode_reward,
            episode_fidelity: fidelity,
            best_fidelity,
            noise_sigma: if epoch < hyper.warmup_epochs { 0.0 } else { noise.sigma_at(epoch) },
            updates,
            critic_loss: if updates > 0 { loss_sum / updates as f64 } else { 0.0 },
            wall_clock: start.elapsed().as_secs_f64(),
        };
        records.push(record);
        if on_epoch(&record).is_break() {
            stopped_early = epoch + 1 < hyper.epochs;
            break;
        }
    }
    let last = records.last().map_or(0, |r| r.epoch);
    save(&agent, last, "final.ckpt".into(), &mut checkpoints)?;

    Ok(TrainingReport {
        seed: hyper.seed,
        hyper: hyper.clone(),
        epochs: records,
        best_fidelity,
        best_epoch,
        best_schedule,
        checkpoints,
        stopped_early,
        wall_clock: start.elapsed().as_secs_f64(),
        agent,
    })
}

fn annotate(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::InvariantViolation { t, what } => Error::InvariantViolation {
            t,
            what: format!("{what} (epoch {epoch}, step {step})"),
        },
        other => other,
    }
}
