// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Pulsed-drive preparation of nonclassical mechanical states in cavity
//! optomechanics: a dressed-master-equation simulator, an episodic control
//! environment and a DDPG pulse optimizer.

pub mod config;
pub mod control;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod hilbert;
pub mod rl;
pub mod sparse;

pub use error::{Error, Result};
