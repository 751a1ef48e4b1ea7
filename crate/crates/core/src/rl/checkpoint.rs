// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Versioned binary checkpoints of the actor and critic.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "OPTMCKPT"
//! 8       4     u32 format version (1)
//! 12      4     u32 joint Hilbert-space dimension D
//! 16      4     u32 pulse count L
//! 20      8     u64 RNG seed
//! 28      8     f64 omega_max
//! 36      4     u32 epoch at which the checkpoint was taken
//! 40      4     u32 network count (2: actor, critic)
//! then, per network:
//!         4     u32 layer count K
//!         4(K+1) u32 layer widths [in, h1, .., out]
//!         K     u8 activation tags (0 identity, 1 relu, 2 tanh)
//!         then per layer: in·out f32 weights (row-major, in × out),
//!                         out f32 biases
//! ```

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Dense, Mlp};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"OPTMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub joint_dim: u32,
    pub pulses: u32,
    pub seed: u64,
    pub omega_max: f64,
    pub epoch: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub actor: Mlp<f32>,
    pub critic: Mlp<f32>,
}

impl Checkpoint {
    pub fn new(joint_dim: usize, seed: u64, epoch: usize, omega_max: f64, actor: Mlp<f32>, critic: Mlp<f32>) -> Self {
        Checkpoint {
            header: CheckpointHeader {
                version: CHECKPOINT_VERSION,
                joint_dim: joint_dim as u32,
                pulses: actor.output_dim() as u32,
                seed,
                omega_max,
                epoch: epoch as u32,
            },
            actor,
            critic,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.extend_from_slice(&h.joint_dim.to_le_bytes());
        out.extend_from_slice(&h.pulses.to_le_bytes());
        out.extend_from_slice(&h.seed.to_le_bytes());
        out.extend_from_slice(&h.omega_max.to_le_bytes());
        out.extend_from_slice(&h.epoch.to_le_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        for net in [&self.actor, &self.critic] {
            let layers = net.layers();
            out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
            for w in net.sizes() {
                out.extend_from_slice(&(w as u32).to_le_bytes());
            }
            out.extend(layers.iter().map(|l| l.activation.tag()));
            for l in layers {
                for v in l.weight.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                for v in l.bias.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let header = CheckpointHeader {
            version,
            joint_dim: r.u32()?,
            pulses: r.u32()?,
            seed: r.u64()?,
            omega_max: r.f64()?,
            epoch: r.u32()?,
        };
        if r.u32()? != 2 {
            return Err(Error::Checkpoint("expected two networks".into()));
        }
        let actor = r.mlp()?;
        let critic = r.mlp()?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let d = header.joint_dim as usize;
        if actor.input_dim() != 2 * d * d || actor.output_dim() != header.pulses as usize {
            return Err(Error::Checkpoint("actor shape disagrees with header".into()));
        }
        if critic.input_dim() != actor.input_dim() + actor.output_dim() || critic.output_dim() != 1 {
            return Err(Error::Checkpoint("critic shape disagrees with actor".into()));
        }
        Ok(Checkpoint { header, actor, critic })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn mlp(&mut self) -> Result<Mlp<f32>> {
        let k = self.u32()? as usize;
        if k == 0 || k > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {k}")));
        }
        let sizes = (0..=k).map(|_| self.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let acts = self
            .take(k)?
            .iter()
            .map(|&t| Activation::from_tag(t).ok_or_else(|| Error::Checkpoint(format!("unknown activation tag {t}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::with_capacity(k);
        for (i, act) in acts.into_iter().enumerate() {
            let (n_in, n_out) = (sizes[i], sizes[i + 1]);
            let needed = n_in.checked_mul(n_out).and_then(|v| v.checked_add(n_out)).and_then(|v| v.checked_mul(4));
            if needed.is_none_or(|n| self.pos + n > self.bytes.len()) {
                return Err(Error::Checkpoint("truncated file".into()));
            }
            let w = (0..n_in * n_out).map(|_| self.f32()).collect::<Result<Vec<_>>>()?;
            let b = (0..n_out).map(|_| self.f32()).collect::<Result<Vec<_>>>()?;
            layers.push(Dense {
                weight: Array2::from_shape_vec((n_in, n_out), w).expect("sized above"),
                bias: Array1::from_vec(b),
                activation: act,
            });
        }
        Mlp::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}
