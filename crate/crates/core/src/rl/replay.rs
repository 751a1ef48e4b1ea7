// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Bounded FIFO experience replay.
//!
//! Observations are vectorized Hermitian matrices, so only the diagonal and
//! the upper triangle are stored (`D²` single-precision reals instead of
//! `2D²`) and consecutive transitions share the state between them.

use std::collections::VecDeque;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};

/// Packed observation: `D` diagonal reals, then the strict upper triangle's
/// real parts row by row, then its imaginary parts.
pub type PackedObs = Arc<[f32]>;

/// Matrix dimension `D` for an observation of `2D²` reals.
pub fn matrix_dim(obs_len: usize) -> Result<usize> {
    let d = ((obs_len / 2) as f64).sqrt().round() as usize;
    if 2 * d * d != obs_len || d == 0 {
        return Err(Error::shape("2D² observation entries", obs_len));
    }
    Ok(d)
}

/// Packs a `2D²` observation (real block then imaginary block, row-major).
pub fn pack_observation(obs: &[f64]) -> Result<PackedObs> {
    let d = matrix_dim(obs.len())?;
    let (re, im) = obs.split_at(d * d);
    let mut out = Vec::with_capacity(d * d);
    out.extend((0..d).map(|i| re[i * d + i] as f32));
    for i in 0..d {
        out.extend(((i + 1)..d).map(|j| re[i * d + j] as f32));
    }
    for i in 0..d {
        out.extend(((i + 1)..d).map(|j| im[i * d + j] as f32));
    }
    Ok(out.into())
}

/// Writes the full `2D²` observation encoded by `packed` into `out`.
pub fn unpack_observation(packed: &[f32], d: usize, out: &mut [f32]) {
    debug_assert_eq!(packed.len(), d * d);
    debug_assert_eq!(out.len(), 2 * d * d);
    let (re, im) = out.split_at_mut(d * d);
    let off_re = d;
    let off_im = d + d * (d - 1) / 2;
    let mut k = 0;
    for i in 0..d {
        re[i * d + i] = packed[i];
        im[i * d + i] = 0.0;
        for j in (i + 1)..d {
            let (a, b) = (packed[off_re + k], packed[off_im + k]);
            re[i * d + j] = a;
            re[j * d + i] = a;
            im[i * d + j] = b;
            im[j * d + i] = -b;
            k += 1;
        }
    }
}

/// `(ρ_t, Ω_t, r_t, ρ_{t+1})`; the action is stored in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: PackedObs,
    pub action: Vec<f32>,
    pub reward: f32,
    pub next_obs: PackedObs,
}

/// Minibatch in network layout; actions are divided by `omega_max`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f32>,
    pub actions: Array2<f32>,
    pub rewards: Array1<f32>,
    pub next_obs: Array2<f32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::param("capacity", "must be >= 1"));
        }
        Ok(ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        })
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample of indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if n == 0 || self.items.len() < n {
            return Err(Error::InsufficientBuffer {
                have: self.items.len(),
                need: n.max(1),
            });
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    /// Samples `n` transitions and expands them into a [`Batch`].
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, omega_max: f64, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(n, rng)?;
        let first = &self.items[idx[0]];
        let d = ((first.obs.len() as f64).sqrt().round()) as usize;
        let l = first.action.len();
        let mut batch = Batch {
            obs: Array2::zeros((n, 2 * d * d)),
            actions: Array2::zeros((n, l)),
            rewards: Array1::zeros(n),
            next_obs: Array2::zeros((n, 2 * d * d)),
        };
        let scale = (1.0 / omega_max) as f32;
        for (r, &i) in idx.iter().enumerate() {
            let t = &self.items[i];
            unpack_observation(&t.obs, d, batch.obs.row_mut(r).as_slice_mut().expect("standard layout"));
            unpack_observation(&t.next_obs, d, batch.next_obs.row_mut(r).as_slice_mut().expect("standard layout"));
            for (c, &a) in t.action.iter().enumerate() {
                batch.actions[(r, c)] = a * scale;
            }
            batch.rewards[r] = t.reward;
        }
        Ok(batch)
    }
}
