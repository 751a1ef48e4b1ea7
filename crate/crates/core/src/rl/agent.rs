// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! DDPG actor, critic, exploration and the per-step network update.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, NdFloat, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Adam, Mlp};
use super::replay::Batch;
use super::Hyperparameters;
use crate::error::{Error, Result};

fn row<F: NdFloat>(v: &[F]) -> ArrayView2<'_, F> {
    ArrayView2::from_shape((1, v.len()), v).expect("contiguous slice")
}

/// Deterministic policy `Ω = omega_max · tanh(net(obs))`; the network's
/// output layer carries the `tanh`.
pub fn actor_forward<F: NdFloat>(net: &Mlp<F>, obs: &[F], omega_max: F) -> Result<Vec<F>> {
    let y = net.forward(row(obs))?;
    Ok(y.iter().map(|&u| u * omega_max).collect())
}

fn critic_input<F: NdFloat>(net: &Mlp<F>, obs: &[F], action: &[F], omega_max: F) -> Result<Array2<F>> {
    if obs.len() + action.len() != net.input_dim() {
        return Err(Error::shape(
            format!("{} observation + action entries", net.input_dim()),
            obs.len() + action.len(),
        ));
    }
    let mut x = Array2::zeros((1, net.input_dim()));
    for (dst, &v) in x.iter_mut().zip(obs) {
        *dst = v;
    }
    for (k, &a) in action.iter().enumerate() {
        x[(0, obs.len() + k)] = a / omega_max;
    }
    Ok(x)
}

/// `Q(obs, Ω)`; the critic sees the action divided by `omega_max`.
pub fn critic_forward<F: NdFloat>(net: &Mlp<F>, obs: &[F], action: &[F], omega_max: F) -> Result<F> {
    let x = critic_input(net, obs, action, omega_max)?;
    Ok(net.forward(x.view())?[(0, 0)])
}

/// `∂Q/∂Ω` at `(obs, Ω)` in physical action units.
pub fn critic_action_gradient<F: NdFloat>(net: &Mlp<F>, obs: &[F], action: &[F], omega_max: F) -> Result<Vec<F>> {
    let x = critic_input(net, obs, action, omega_max)?;
    let tape = net.forward_tape(x)?;
    let ones = Array2::from_elem((1, 1), F::one());
    let (_, g) = net.backward(&tape, &ones, false, Some(obs.len()..net.input_dim()));
    Ok(g.expect("input gradient requested").iter().map(|&v| v / omega_max).collect())
}

/// Gaussian exploration with per-epoch geometric decay of the scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationNoise {
    /// Standard deviation at epoch 0, physical units.
    pub sigma: f64,
    pub decay: f64,
}

impl ExplorationNoise {
    pub fn sigma_at(&self, epoch: usize) -> f64 {
        self.sigma * self.decay.powi(epoch as i32)
    }
}

/// Action for one control step: uniform in `±omega_max` during the first
/// `warmup` epochs, afterwards the actor output plus Gaussian noise, clipped.
pub fn select_action<R: Rng + ?Sized>(
    actor: &Mlp<f32>,
    obs: &[f32],
    noise: &ExplorationNoise,
    epoch: usize,
    warmup: usize,
    omega_max: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if epoch < warmup {
        let u = Uniform::new_inclusive(-omega_max, omega_max).map_err(|e| Error::param("omega_max", e.to_string()))?;
        return Ok((0..actor.output_dim()).map(|_| u.sample(rng)).collect());
    }
    let mean = actor_forward(actor, obs, omega_max as f32)?;
    let sigma = noise.sigma_at(epoch);
    let out = if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).map_err(|e| Error::param("noise_sigma", e.to_string()))?;
        mean.iter().map(|&m| m as f64 + n.sample(rng)).collect::<Vec<_>>()
    } else {
        mean.iter().map(|&m| m as f64).collect()
    };
    Ok(out.into_iter().map(|a| a.clamp(-omega_max, omega_max)).collect())
}

/// Main and target networks with their optimizers.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Mlp<f32>,
    pub critic: Mlp<f32>,
    pub actor_target: Mlp<f32>,
    pub critic_target: Mlp<f32>,
    actor_opt: Adam<f32>,
    critic_opt: Adam<f32>,
    omega_max: f64,
    preactivation_penalty: f32,
}

impl Agent {
    /// Fresh agent; targets start as copies of the main networks.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        omega_max: f64,
        hyper: &Hyperparameters,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = |input: usize, output: usize| -> Vec<usize> {
            std::iter::once(input)
                .chain(hyper.hidden.iter().copied())
                .chain(std::iter::once(output))
                .collect()
        };
        let actor = Mlp::new(&sizes(obs_dim, act_dim), Activation::Relu, Activation::Tanh, rng)?;
        let critic = Mlp::new(&sizes(obs_dim + act_dim, 1), Activation::Relu, Activation::Identity, rng)?;
        Self::from_networks(actor, critic, omega_max, hyper)
    }

    pub fn from_networks(actor: Mlp<f32>, critic: Mlp<f32>, omega_max: f64, hyper: &Hyperparameters) -> Result<Self> {
        if critic.input_dim() != actor.input_dim() + actor.output_dim() || critic.output_dim() != 1 {
            return Err(Error::shape(
                format!("critic {} -> 1", actor.input_dim() + actor.output_dim()),
                format!("critic {} -> {}", critic.input_dim(), critic.output_dim()),
            ));
        }
        Ok(Agent {
            actor_opt: Adam::new(&actor, hyper.actor_lr),
            critic_opt: Adam::new(&critic, hyper.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            omega_max,
            preactivation_penalty: hyper.preactivation_penalty as f32,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// Noise-free policy action for an `f64` observation.
    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let x: Vec<f32> = obs.iter().map(|&v| v as f32).collect();
        Ok(actor_forward(&self.actor, &x, self.omega_max as f32)?
            .into_iter()
            .map(|v: f32| v as f64)
            .collect())
    }
}

/// Mean losses of one update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    /// `mean (Q − y)²`.
    pub critic: f64,
    /// `−mean Q(s, μ(s))` before the actor step.
    pub actor: f64,
}

/// One DDPG step: critic regression toward `r + γ_d Q′(s′, μ′(s′))`, actor
/// ascent on `Q(s, μ(s)) − λ Σ u²` (u the actor's pre-`tanh` output, λ the
/// `preactivation_penalty`), then soft target updates with rate `tau`.
pub fn update_networks(agent: &mut Agent, batch: &Batch, tau: f64, gamma_discount: f64) -> Result<Losses> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::InsufficientBuffer { have: 0, need: 1 });
    }
    let obs_dim = agent.obs_dim();
    if batch.obs.ncols() != obs_dim || batch.actions.ncols() != agent.act_dim() {
        return Err(Error::shape(
            format!("batch with {obs_dim} obs and {} action columns", agent.act_dim()),
            format!("{} and {}", batch.obs.ncols(), batch.actions.ncols()),
        ));
    }
    let inv_n = 1.0 / n as f32;

    let y = critic_targets(agent, batch, gamma_discount)?;

    let x = concatenate(Axis(1), &[batch.obs.view(), batch.actions.view()]).expect("same row count");
    let tape = agent.critic.forward_tape(x)?;
    let diff = &tape.output().column(0) - &y;
    let critic_loss = diff.iter().map(|d| (*d as f64).powi(2)).sum::<f64>() / n as f64;
    let grad = (diff * (2.0 * inv_n)).insert_axis(Axis(1));
    let (g, _) = agent.critic.backward(&tape, &grad, true, None);
    agent.critic_opt.step(&mut agent.critic, &g.expect("parameter gradients requested"));

    // actor step through the updated critic
    let atape = agent.actor.forward_tape(batch.obs.clone())?;
    let y = atape.output();
    let x = concatenate(Axis(1), &[batch.obs.view(), y.view()]).expect("same row count");
    let ctape = agent.critic.forward_tape(x)?;
    let actor_loss = -ctape.output().iter().map(|&q| q as f64).sum::<f64>() / n as f64;
    let ones = Array2::from_elem((n, 1), -inv_n);
    let (_, dq_dy) = agent.critic.backward(&ctape, &ones, false, Some(obs_dim..obs_dim + agent.act_dim()));
    // through the output tanh, plus λ·mean Σ u² on the pre-activation u
    let mut grad_pre = dq_dy.expect("input gradient requested");
    let u = agent.actor.output_preactivation(&atape);
    let lam = 2.0 * agent.preactivation_penalty * inv_n;
    Zip::from(&mut grad_pre).and(y).and(&u).for_each(|g, &y, &u| *g = *g * (1.0 - y * y) + lam * u);
    let (g, _) = agent.actor.backward_preactivation(&atape, &grad_pre, true, None);
    agent.actor_opt.step(&mut agent.actor, &g.expect("parameter gradients requested"));

    let tau = tau as f32;
    agent.actor_target.soft_update_from(&agent.actor, tau);
    agent.critic_target.soft_update_from(&agent.critic, tau);

    Ok(Losses {
        critic: critic_loss,
        actor: actor_loss,
    })
}

/// Critic regression targets `r + γ_d Q′(s′, μ′(s′))` for a batch.
pub fn critic_targets(agent: &Agent, batch: &Batch, gamma_discount: f64) -> Result<Array1<f32>> {
    let next_u = agent.actor_target.forward(batch.next_obs.view())?;
    let next_x = concatenate(Axis(1), &[batch.next_obs.view(), next_u.view()]).expect("same row count");
    let q_next = agent.critic_target.forward(next_x.view())?;
    Ok(&batch.rewards + &(q_next.slice(s![.., 0]).to_owned() * gamma_discount as f32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_hyper() -> Hyperparameters {
        Hyperparameters {
            hidden: vec![8, 8],
            ..Hyperparameters::default()
        }
    }

    fn batch(n: usize, obs_dim: usize, act: usize, rng: &mut ChaCha8Rng) -> Batch {
        let u = Uniform::new(-1.0f32, 1.0).unwrap();
        Batch {
            obs: Array2::from_shape_simple_fn((n, obs_dim), || u.sample(rng)),
            actions: Array2::from_shape_simple_fn((n, act), || u.sample(rng)),
            rewards: Array1::from_shape_simple_fn(n, || u.sample(rng) * 5.0),
            next_obs: Array2::from_shape_simple_fn((n, obs_dim), || u.sample(rng)),
        }
    }

    #[test]
    fn zero_networks() {
        let actor = Mlp::<f64>::zeroed(&[6, 4, 2], Activation::Relu, Activation::Tanh).unwrap();
        assert_eq!(actor_forward(&actor, &[0.3; 6], 0.2).unwrap(), vec![0.0, 0.0]);
        let critic = Mlp::<f64>::zeroed(&[8, 4, 1], Activation::Relu, Activation::Identity).unwrap();
        assert_eq!(critic_forward(&critic, &[0.3; 6], &[0.1, 0.1], 0.2).unwrap(), 0.0);
        assert!(critic_forward(&critic, &[0.3; 5], &[0.1, 0.1], 0.2).is_err());
    }

    #[test]
    fn actor_bounds_and_determinism() {
        let make = || Mlp::<f64>::new(&[5, 16, 3], Activation::Relu, Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let obs = [1.0, -2.0, 3.0, 0.5, 0.0];
        assert_eq!(actor_forward(&make(), &obs, 0.2).unwrap(), actor_forward(&make(), &obs, 0.2).unwrap());
        let mut actor = make();
        actor.layers_mut()[1].weight.mapv_inplace(|w| w * 1e4);
        let a = actor_forward(&actor, &obs, 0.2).unwrap();
        assert!(a.iter().all(|v| v.abs() <= 0.2));
    }

    #[test]
    fn selection_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let actor = Mlp::<f32>::new(&[4, 8, 2], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let obs = [0.1f32, 0.2, -0.3, 0.4];
        let quiet = ExplorationNoise { sigma: 0.0, decay: 0.999 };
        let a = select_action(&actor, &obs, &quiet, 5, 0, 0.2, &mut rng).unwrap();
        let pure: Vec<f64> = actor_forward(&actor, &obs, 0.2f32).unwrap().into_iter().map(|v: f32| v as f64).collect();
        assert_eq!(a, pure);

        let loud = ExplorationNoise { sigma: 50.0, decay: 1.0 };
        for _ in 0..50 {
            let a = select_action(&actor, &obs, &loud, 3, 0, 0.2, &mut rng).unwrap();
            assert!(a.iter().all(|v| v.abs() <= 0.2));
        }
        // warmup ignores the actor: with a saturated actor the samples still spread out
        let mut sat = actor.clone();
        sat.layers_mut()[1].bias.fill(100.0);
        let draws: Vec<f64> = (0..200)
            .map(|_| select_action(&sat, &obs, &quiet, 0, 1, 0.2, &mut rng).unwrap()[0])
            .collect();
        assert!(draws.iter().any(|&v| v < -0.1) && draws.iter().any(|&v| v > 0.1));
        assert!(draws.iter().all(|v| v.abs() <= 0.2));
    }

    #[test]
    fn critic_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let critic = Mlp::<f64>::new(&[7, 32, 32, 1], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let mut critic = critic;
        critic.layers_mut()[2].weight.mapv_inplace(|w| w * 300.0);
        let obs = [0.2, -0.1, 0.4, 0.0, 0.3];
        let act = [0.05, -0.12];
        let g = critic_action_gradient(&critic, &obs, &act, 0.2).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut p = act;
            p[k] += h;
            let mut m = act;
            m[k] -= h;
            let fd = (critic_forward(&critic, &obs, &p, 0.2).unwrap() - critic_forward(&critic, &obs, &m, 0.2).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-4 * fd.abs().max(1e-8), "{fd} vs {}", g[k]);
        }
    }

    #[test]
    fn tau_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut agent = Agent::new(6, 2, 0.2, &small_hyper(), &mut rng).unwrap();
        let b = batch(16, 6, 2, &mut rng);
        let before = agent.actor_target.clone();
        update_networks(&mut agent, &b, 0.0, 0.99).unwrap();
        assert_eq!(agent.actor_target, before);
        update_networks(&mut agent, &b, 1.0, 0.99).unwrap();
        assert_eq!(agent.actor_target, agent.actor);
        assert_eq!(agent.critic_target, agent.critic);
    }

    #[test]
    fn zero_discount_targets_are_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let agent = Agent::new(6, 2, 0.2, &small_hyper(), &mut rng).unwrap();
        let b = batch(10, 6, 2, &mut rng);
        assert_eq!(critic_targets(&agent, &b, 0.0).unwrap(), b.rewards);
    }

    #[test]
    fn critic_learns_constant_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hyper = Hyperparameters {
            hidden: vec![16, 16],
            critic_lr: 1e-2,
            ..Hyperparameters::default()
        };
        let mut agent = Agent::new(4, 1, 0.2, &hyper, &mut rng).unwrap();
        let mut b = batch(32, 4, 1, &mut rng);
        b.rewards.fill(3.0);
        let first = update_networks(&mut agent, &b, 0.1, 0.0).unwrap().critic;
        let mut last = first;
        for _ in 0..300 {
            last = update_networks(&mut agent, &b, 0.1, 0.0).unwrap().critic;
        }
        assert!(last < 1e-2 * first, "{first} -> {last}");
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut agent = Agent::new(6, 2, 0.2, &small_hyper(), &mut rng).unwrap();
        let b = batch(4, 5, 2, &mut rng);
        assert!(update_networks(&mut agent, &b, 0.1, 0.9).is_err());
    }
}
