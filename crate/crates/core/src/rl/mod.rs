// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Deep deterministic policy gradient: networks, replay, training loop and
//! checkpoints.

pub mod agent;
pub mod checkpoint;
pub mod mlp;
pub mod replay;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use agent::{
    actor_forward, critic_action_gradient, critic_forward, select_action, update_networks, Agent, ExplorationNoise,
    Losses,
};
pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use mlp::{Activation, Adam, Mlp};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{train, train_with, EpochRecord, TrainingReport};

/// Training hyperparameters. `noise_sigma` is a fraction of `omega_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub gamma_discount: f64,
    pub noise_sigma: f64,
    pub noise_decay: f64,
    pub capacity: usize,
    pub seed: u64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: Vec<usize>,
    /// Weight of the squared pre-`tanh` actor output in the actor loss.
    pub preactivation_penalty: f64,
    /// Write a checkpoint every this many epochs; 0 disables periodic saves.
    pub checkpoint_every: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            epochs: 800,
            warmup_epochs: 10,
            batch_size: 128,
            tau: 0.1,
            gamma_discount: 0.99,
            noise_sigma: 0.2,
            noise_decay: 0.999,
            capacity: 100_000,
            seed: 0,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            hidden: vec![256, 256],
            preactivation_penalty: 1e-2,
            checkpoint_every: 100,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(name, format!("must lie in [0, 1], got {v}")))
            }
        };
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be >= 1"));
        }
        if self.capacity < self.batch_size {
            return Err(Error::param("capacity", "must be >= batch_size"));
        }
        unit("tau", self.tau)?;
        unit("gamma_discount", self.gamma_discount)?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::param("noise_sigma", "must be >= 0"));
        }
        if !(self.noise_decay > 0.0 && self.noise_decay <= 1.0) {
            return Err(Error::param("noise_decay", "must lie in (0, 1]"));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::param(name, "must be > 0"));
            }
        }
        if !(self.preactivation_penalty.is_finite() && self.preactivation_penalty >= 0.0) {
            return Err(Error::param("preactivation_penalty", "must be >= 0"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::param("hidden", "need at least one positive layer width"));
        }
        Ok(())
    }
}
