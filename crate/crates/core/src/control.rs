// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Target states and the episodic pulse-shaping environment.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, Subsystem};
use crate::dynamics::{DensityMatrix, IntegratorOptions, PulseSchedule, Propagator};
use crate::error::{Error, Result};
use crate::hilbert::{carrier_detunings, SystemConfig};

const NORM_TOL: f64 = 1e-12;

/// Two-mode maximally entangled mechanical states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub fn name(self) -> &'static str {
        match self {
            BellState::PhiPlus => "phi_plus",
            BellState::PhiMinus => "phi_minus",
            BellState::PsiPlus => "psi_plus",
            BellState::PsiMinus => "psi_minus",
        }
    }
}

/// Pure mechanical target `|ψ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    /// Single-mode Fock state `|N⟩`.
    Fock(usize),
    /// Single-mode superposition `Σ c_k |n_k⟩` with normalized amplitudes.
    Superposition(Vec<(usize, Complex64)>),
    Bell(BellState),
}

impl TargetSpec {
    pub fn fock(n: usize) -> Self {
        TargetSpec::Fock(n)
    }

    pub fn bell(which: BellState) -> Self {
        TargetSpec::Bell(which)
    }

    /// Superposition with explicit amplitudes. Indices must be distinct and
    /// the amplitudes normalized within 1e-12.
    pub fn superposition(components: Vec<(usize, Complex64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::param("components", "superposition needs at least one component"));
        }
        let mut seen: Vec<usize> = components.iter().map(|c| c.0).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("components", "Fock indices must be distinct"));
        }
        let norm: f64 = components.iter().map(|c| c.1.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::param("amplitudes", format!("squared norm is {norm}, expected 1")));
        }
        Ok(TargetSpec::Superposition(components))
    }

    /// Equal-weight superposition over the given Fock indices.
    pub fn equal_superposition(indices: &[usize]) -> Result<Self> {
        let c = Complex64::new(1.0 / (indices.len() as f64).sqrt(), 0.0);
        Self::superposition(indices.iter().map(|&n| (n, c)).collect())
    }

    /// Number of mechanical modes the target lives on.
    pub fn modes(&self) -> usize {
        match self {
            TargetSpec::Bell(_) => 2,
            _ => 1,
        }
    }

    /// `|ψ⟩` in the mechanical basis with the given per-mode dimensions
    /// (mode 1 slowest).
    pub fn state_vector(&self, mech_dims: &[usize]) -> Result<DVector<Complex64>> {
        if mech_dims.len() != self.modes() {
            return Err(Error::shape(
                format!("{} mechanical modes", self.modes()),
                format!("{} modes", mech_dims.len()),
            ));
        }
        let d: usize = mech_dims.iter().product();
        let mut v = DVector::from_element(d, Complex64::new(0.0, 0.0));
        let out_of_range = |n: usize| Error::param("target", format!("Fock index {n} outside truncation {d}"));
        match self {
            TargetSpec::Fock(n) => {
                if *n >= d {
                    return Err(out_of_range(*n));
                }
                v[*n] = Complex64::new(1.0, 0.0);
            }
            TargetSpec::Superposition(components) => {
                for &(n, c) in components {
                    if n >= d {
                        return Err(out_of_range(n));
                    }
                    v[n] = c;
                }
            }
            TargetSpec::Bell(which) => {
                let d2 = mech_dims[1];
                let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                let (first, second) = match which {
                    BellState::PhiPlus | BellState::PhiMinus => ((0, 0), (1, 1)),
                    BellState::PsiPlus | BellState::PsiMinus => ((0, 1), (1, 0)),
                };
                let sign = match which {
                    BellState::PhiPlus | BellState::PsiPlus => 1.0,
                    _ => -1.0,
                };
                v[first.0 * d2 + first.1] = h;
                v[second.0 * d2 + second.1] = h * sign;
            }
        }
        Ok(v)
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSpec::Fock(n) => write!(f, "fock({n})"),
            TargetSpec::Superposition(c) => {
                let idx: Vec<String> = c.iter().map(|(n, _)| n.to_string()).collect();
                write!(f, "superposition({})", idx.join(","))
            }
            TargetSpec::Bell(b) => write!(f, "bell({})", b.name()),
        }
    }
}

/// Flattens `ρ` into `2D²` reals: real parts row-major, then imaginary parts.
pub fn vectorize_state(rho: &DensityMatrix) -> Vec<f64> {
    let m = rho.matrix();
    let d = m.nrows();
    let mut out = vec![0.0; 2 * d * d];
    let (re, im) = out.split_at_mut(d * d);
    for i in 0..d {
        for j in 0..d {
            let z = m[(i, j)];
            re[i * d + j] = z.re;
            im[i * d + j] = z.im;
        }
    }
    out
}

/// Inverse of [`vectorize_state`].
pub fn devectorize_state(obs: &[f64], dims: Vec<usize>) -> Result<DensityMatrix> {
    let d: usize = dims.iter().product();
    if obs.len() != 2 * d * d {
        return Err(Error::shape(2 * d * d, obs.len()));
    }
    let m = DMatrix::from_fn(d, d, |i, j| Complex64::new(obs[i * d + j], obs[d * d + i * d + j]));
    DensityMatrix::from_matrix(m, dims)
}

/// Largest fidelity fed into the reward.
pub const FIDELITY_CAP: f64 = 1.0 - 1e-12;

/// `−10 log₁₀(1 − F)` with `F` clamped to `[0, FIDELITY_CAP]`.
pub fn reward_from_fidelity(f: f64) -> f64 {
    let f = if f.is_nan() { 0.0 } else { f.clamp(0.0, FIDELITY_CAP) };
    -10.0 * (1.0 - f).log10()
}

/// How the environment scores a joint state against the mechanical target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidelityMode {
    /// `⟨ψ| Tr_a ρ |ψ⟩`.
    #[default]
    Reduced,
    /// `⟨0_a ψ| ρ |0_a ψ⟩`.
    Projected,
}

/// Fidelity of a joint state to the target under the chosen convention.
pub fn state_fidelity(rho: &DensityMatrix, target: &TargetSpec, mode: FidelityMode) -> Result<f64> {
    match mode {
        FidelityMode::Reduced => {
            let rho_b = diagnostics::partial_trace(rho, Subsystem::Mechanics)?;
            diagnostics::fidelity(&rho_b, target)
        }
        FidelityMode::Projected => diagnostics::projected_fidelity(rho, target),
    }
}

/// Per-step reward of a joint state with the reduced-state fidelity.
pub fn reward(rho_next: &DensityMatrix, target: &TargetSpec) -> Result<f64> {
    Ok(reward_from_fidelity(state_fidelity(rho_next, target, FidelityMode::Reduced)?))
}

/// Episode grid and environment switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub total_time: f64,
    pub steps: usize,
    pub omega_max: f64,
    pub fidelity: FidelityMode,
    pub integrator: IntegratorOptions,
}

/// Result of one [`Environment::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub fidelity: f64,
    pub done: bool,
}

/// Episodic environment: the joint system starts in vacuum and each action
/// sets the pulse amplitudes for one control step.
#[derive(Debug, Clone)]
pub struct Environment {
    cfg: SystemConfig,
    target: TargetSpec,
    spec: EpisodeSpec,
    propagator: Propagator,
    schedule: PulseSchedule,
    rho: DensityMatrix,
    step: usize,
    last_fidelity: f64,
}

impl Environment {
    pub fn new(cfg: SystemConfig, target: TargetSpec, spec: EpisodeSpec) -> Result<Self> {
        cfg.validate()?;
        if spec.steps == 0 {
            return Err(Error::param("steps", "must be >= 1"));
        }
        let detunings = carrier_detunings(&target, &cfg)?;
        target.state_vector(&cfg.mech_dims())?;
        let schedule = PulseSchedule::zeros(detunings, spec.steps, spec.total_time, spec.omega_max)?;
        let propagator = Propagator::new(&cfg, schedule.detunings(), spec.integrator)?;
        let rho = DensityMatrix::ground(&cfg);
        let last_fidelity = state_fidelity(&rho, &target, spec.fidelity)?;
        Ok(Environment {
            cfg,
            target,
            spec,
            propagator,
            schedule,
            rho,
            step: 0,
            last_fidelity,
        })
    }

    /// Returns to the joint vacuum and clears the schedule.
    pub fn reset(&mut self) -> Vec<f64> {
        self.rho = DensityMatrix::ground(&self.cfg);
        self.step = 0;
        let zeros = vec![0.0; self.action_dim()];
        for s in 0..self.spec.steps {
            self.schedule.set_step(s, &zeros).expect("zero amplitudes are valid");
        }
        self.last_fidelity = state_fidelity(&self.rho, &self.target, self.spec.fidelity).unwrap_or(0.0);
        vectorize_state(&self.rho)
    }

    /// Applies `action` (clipped to `±omega_max`) for one control step.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.step >= self.spec.steps {
            return Err(Error::EpisodeFinished { steps: self.spec.steps });
        }
        let s = self.step;
        self.schedule.set_step(s, action)?;
        let t0 = self.schedule.time_of(s);
        let amps = self.schedule.amplitudes()[s].clone();
        self.propagator.advance(&mut self.rho, t0, self.schedule.dt(), &amps)?;
        self.step += 1;
        let fidelity = state_fidelity(&self.rho, &self.target, self.spec.fidelity)?;
        self.last_fidelity = fidelity;
        Ok(StepOutcome {
            observation: vectorize_state(&self.rho),
            reward: reward_from_fidelity(fidelity),
            fidelity,
            done: self.step == self.spec.steps,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn target(&self) -> &TargetSpec {
        &self.target
    }

    pub fn spec(&self) -> &EpisodeSpec {
        &self.spec
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.rho
    }

    /// Amplitudes applied so far in this episode (unvisited steps are zero).
    pub fn schedule(&self) -> &PulseSchedule {
        &self.schedule
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.spec.steps
    }

    /// Fidelity of the current state.
    pub fn fidelity(&self) -> f64 {
        self.last_fidelity
    }

    pub fn obs_dim(&self) -> usize {
        let d = self.cfg.dim();
        2 * d * d
    }

    pub fn action_dim(&self) -> usize {
        self.schedule.pulses()
    }

    pub fn omega_max(&self) -> f64 {
        self.spec.omega_max
    }
}
