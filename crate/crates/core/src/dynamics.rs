// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Rotating-frame Hamiltonians, the dressed Lindblad master equation, and a
//! fixed-step fourth-order integrator for pulsed episodes.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{joint_ladders, DetuningSet, SystemConfig};
use crate::sparse::SparseOp;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Hermiticity bound a stored state must satisfy.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Trace bound a stored state must satisfy.
pub const TRACE_TOL: f64 = 1e-8;
/// Smallest eigenvalue a stored state may have.
pub const POSITIVITY_TOL: f64 = 1e-7;

/// Dense density matrix over a tensor-product space with known factor
/// dimensions (first factor slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    data: DMatrix<Complex64>,
    dims: Vec<usize>,
}

impl DensityMatrix {
    /// Wraps a matrix without checking the state invariants, only the shape.
    pub fn from_matrix(data: DMatrix<Complex64>, dims: Vec<usize>) -> Result<Self> {
        let d: usize = dims.iter().product();
        if data.nrows() != d || data.ncols() != d {
            return Err(Error::shape(
                format!("{d}x{d} for dims {dims:?}"),
                format!("{}x{}", data.nrows(), data.ncols()),
            ));
        }
        Ok(DensityMatrix { data, dims })
    }

    /// Pure state `|ψ⟩⟨ψ|`; `psi` is normalized first.
    pub fn pure(psi: &nalgebra::DVector<Complex64>, dims: Vec<usize>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::param("psi", "zero vector"));
        }
        let v = psi / Complex64::new(norm, 0.0);
        Self::from_matrix(&v * v.adjoint(), dims)
    }

    /// Basis projector `|k⟩⟨k|` on the joint space.
    pub fn basis(index: usize, dims: Vec<usize>) -> Result<Self> {
        let d: usize = dims.iter().product();
        if index >= d {
            return Err(Error::param("index", format!("{index} outside dimension {d}")));
        }
        let mut m = DMatrix::from_element(d, d, C0);
        m[(index, index)] = C1;
        Self::from_matrix(m, dims)
    }

    /// Joint vacuum of the system described by `cfg`.
    pub fn ground(cfg: &SystemConfig) -> Self {
        Self::basis(0, cfg.dims()).expect("index 0 always in range")
    }

    /// Maximally mixed state.
    pub fn maximally_mixed(dims: Vec<usize>) -> Self {
        let d: usize = dims.iter().product();
        let m = DMatrix::identity(d, d) * Complex64::new(1.0 / d as f64, 0.0);
        DensityMatrix { data: m, dims }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.data
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    pub fn trace_error(&self) -> f64 {
        (self.trace() - C1).norm()
    }

    /// `max |ρ − ρ†|` elementwise.
    pub fn hermiticity_residue(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.data + self.data.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().min()
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        // Tr(ρ ρ) = Σ_ij ρ_ij ρ_ji
        let d = self.dim();
        let mut acc = C0;
        for i in 0..d {
            for j in 0..d {
                acc += self.data[(i, j)] * self.data[(j, i)];
            }
        }
        acc.re
    }

    /// `ρ ← (ρ + ρ†)/2`.
    pub fn symmetrize(&mut self) {
        let d = self.dim();
        for i in 0..d {
            self.data[(i, i)].im = 0.0;
            for j in (i + 1)..d {
                let avg = (self.data[(i, j)] + self.data[(j, i)].conj()) * 0.5;
                self.data[(i, j)] = avg;
                self.data[(j, i)] = avg.conj();
            }
        }
    }

    /// Checks Hermiticity, unit trace and (if requested) positivity.
    pub fn validate(&self, check_positivity: bool) -> Result<()> {
        let what = if self.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            Some("non-finite entries".to_string())
        } else if self.hermiticity_residue() > HERMITICITY_TOL {
            Some(format!("hermiticity residue {:e}", self.hermiticity_residue()))
        } else if self.trace_error() > TRACE_TOL {
            Some(format!("trace error {:e}", self.trace_error()))
        } else if check_positivity && self.min_eigenvalue() < -POSITIVITY_TOL {
            Some(format!("minimum eigenvalue {:e}", self.min_eigenvalue()))
        } else {
            None
        };
        match what {
            Some(what) => Err(Error::InvariantViolation { t: f64::NAN, what }),
            None => Ok(()),
        }
    }
}

/// Piecewise-constant real drive amplitudes on a uniform grid, one column
/// per carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    detunings: DetuningSet,
    amplitudes: Vec<Vec<f64>>,
    total_time: f64,
    omega_max: f64,
}

impl PulseSchedule {
    pub fn new(
        detunings: DetuningSet,
        amplitudes: Vec<Vec<f64>>,
        total_time: f64,
        omega_max: f64,
    ) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::param("steps", "schedule needs at least one step"));
        }
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(Error::param("total_time", format!("must be > 0, got {total_time}")));
        }
        if !(omega_max.is_finite() && omega_max > 0.0) {
            return Err(Error::param("omega_max", format!("must be > 0, got {omega_max}")));
        }
        let l = detunings.len();
        for (s, row) in amplitudes.iter().enumerate() {
            if row.len() != l {
                return Err(Error::shape(format!("{l} amplitudes at step {s}"), row.len()));
            }
            if let Some(bad) = row.iter().find(|a| !(a.abs() <= omega_max)) {
                return Err(Error::param(
                    "amplitudes",
                    format!("|{bad}| exceeds omega_max {omega_max} at step {s}"),
                ));
            }
        }
        Ok(PulseSchedule {
            detunings,
            amplitudes,
            total_time,
            omega_max,
        })
    }

    pub fn zeros(detunings: DetuningSet, steps: usize, total_time: f64, omega_max: f64) -> Result<Self> {
        let l = detunings.len();
        Self::new(detunings, vec![vec![0.0; l]; steps], total_time, omega_max)
    }

    pub fn detunings(&self) -> &DetuningSet {
        &self.detunings
    }

    pub fn amplitudes(&self) -> &[Vec<f64>] {
        &self.amplitudes
    }

    pub fn steps(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn pulses(&self) -> usize {
        self.detunings.len()
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn dt(&self) -> f64 {
        self.total_time / self.steps() as f64
    }

    /// Start time of step `s`.
    pub fn time_of(&self, s: usize) -> f64 {
        s as f64 * self.dt()
    }

    /// Index of the control step containing `t`; `t = T` belongs to the last step.
    pub fn step_of(&self, t: f64) -> Result<usize> {
        let slack = 1e-12 * self.total_time;
        if !(t >= -slack && t <= self.total_time + slack) {
            return Err(Error::TimeOutOfRange {
                t,
                total: self.total_time,
            });
        }
        let s = (t / self.dt()).floor().max(0.0) as usize;
        Ok(s.min(self.steps() - 1))
    }

    /// Sets the amplitudes of step `s`, clipping to `±omega_max`.
    pub fn set_step(&mut self, s: usize, amps: &[f64]) -> Result<()> {
        if s >= self.steps() {
            return Err(Error::param("step", format!("{s} outside {} steps", self.steps())));
        }
        if amps.len() != self.pulses() {
            return Err(Error::shape(format!("{} amplitudes", self.pulses()), amps.len()));
        }
        let w = self.omega_max;
        for (dst, &a) in self.amplitudes[s].iter_mut().zip(amps) {
            if !a.is_finite() {
                return Err(Error::param("amplitudes", "non-finite amplitude"));
            }
            *dst = a.clamp(-w, w);
        }
        Ok(())
    }

    /// Largest `|Ω|` over all steps and pulses.
    pub fn peak_amplitude(&self) -> f64 {
        self.amplitudes
            .iter()
            .flatten()
            .fold(0.0f64, |acc, a| acc.max(a.abs()))
    }
}

/// Undriven Hamiltonian `Σ ω_i b_i†b_i − Σ g_i a†a (b_i + b_i†)` and the
/// joint ladder operators.
struct Operators {
    h0: DMatrix<Complex64>,
    a: DMatrix<Complex64>,
    /// (rate, jump operator)
    jumps: Vec<(f64, DMatrix<Complex64>)>,
}

fn build_operators(cfg: &SystemConfig) -> Result<Operators> {
    cfg.validate()?;
    let lad = joint_ladders(cfg)?;
    let d = cfg.dim();
    let n_a = lad.a.adjoint() * &lad.a;
    let mut h0 = DMatrix::from_element(d, d, C0);
    let mut jumps = Vec::new();
    let mut dephasing = 0.0;
    for (mode, b) in cfg.modes.iter().zip(&lad.b) {
        let bd = b.adjoint();
        h0 += &bd * b * Complex64::new(mode.omega, 0.0);
        h0 -= &n_a * (b + &bd) * Complex64::new(mode.g0, 0.0);
        let shift = &n_a * Complex64::new(mode.beta(), 0.0);
        jumps.push((mode.gamma * (mode.n_th + 1.0), b - &shift));
        jumps.push((mode.gamma * mode.n_th, &bd - &shift));
        dephasing += 4.0 * mode.gamma * mode.thermal_energy_ratio() * mode.beta().powi(2);
    }
    jumps.push((cfg.kappa, lad.a.clone()));
    jumps.push((dephasing, n_a.clone()));
    jumps.retain(|(rate, _)| *rate > 0.0);
    Ok(Operators { h0, a: lad.a, jumps })
}

/// `Σ_l Ω_l e^{−iΔ_l t}`, the coefficient of `a†` in the drive term.
fn drive_coefficient(deltas: &[f64], amps: &[f64], t: f64) -> Complex64 {
    deltas
        .iter()
        .zip(amps)
        .map(|(&d, &w)| Complex64::from_polar(w, -d * t))
        .sum()
}

/// Rotating-frame Hamiltonian at time `t`: undriven part plus
/// `Σ_l [Ω_l(step(t)) a† e^{−iΔ_l t} + H.c.]`.
pub fn hamiltonian_at(t: f64, sched: &PulseSchedule, cfg: &SystemConfig) -> Result<DMatrix<Complex64>> {
    let s = sched.step_of(t)?;
    let ops = build_operators(cfg)?;
    let c = drive_coefficient(sched.detunings().deltas(), &sched.amplitudes()[s], t);
    let ad = ops.a.adjoint();
    Ok(ops.h0 + ad * c + &ops.a * c.conj())
}

/// `D[o]ρ = (2 o ρ o† − ρ o†o − o†o ρ) / 2`.
pub fn lindblad_dissipator(o: &DMatrix<Complex64>, rho: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if o.shape() != rho.shape() || o.nrows() != o.ncols() {
        return Err(Error::shape(
            format!("{:?}", rho.shape()),
            format!("{:?}", o.shape()),
        ));
    }
    let od = o.adjoint();
    let ood = &od * o;
    Ok((o * rho * &od * Complex64::new(2.0, 0.0) - rho * &ood - &ood * rho) * Complex64::new(0.5, 0.0))
}

/// Dense right-hand side of the dressed master equation.
pub fn master_rhs(
    rho: &DensityMatrix,
    t: f64,
    sched: &PulseSchedule,
    cfg: &SystemConfig,
) -> Result<DMatrix<Complex64>> {
    if rho.dims() != cfg.dims().as_slice() {
        return Err(Error::shape(format!("dims {:?}", cfg.dims()), format!("{:?}", rho.dims())));
    }
    let r = rho.matrix();
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) || rho.hermiticity_residue() > HERMITICITY_TOL {
        return Err(Error::InvariantViolation {
            t,
            what: "input is not a Hermitian finite matrix".into(),
        });
    }
    let h = hamiltonian_at(t, sched, cfg)?;
    let ops = build_operators(cfg)?;
    let mut out = (r * &h - &h * r) * I;
    for (rate, op) in &ops.jumps {
        out += lindblad_dissipator(op, r)? * Complex64::new(*rate, 0.0);
    }
    Ok(out)
}

/// Sparse form of the master equation used by the integrator.
///
/// The anti-Hermitian decay part is folded into `h0_eff = H0 − (i/2)Σ r L†L`
/// so the right-hand side is `−i(Xρ − (Xρ)†) + Σ r LρL†` with
/// `X = h0_eff + c a† + c* a`.
#[derive(Debug, Clone)]
pub struct MasterEquation {
    dim: usize,
    h0_eff: SparseOp,
    a: SparseOp,
    a_dag: SparseOp,
    jumps: Vec<(f64, SparseOp)>,
    deltas: Vec<f64>,
    max_frequency: f64,
}

impl MasterEquation {
    pub fn new(cfg: &SystemConfig, detunings: &DetuningSet) -> Result<Self> {
        let ops = build_operators(cfg)?;
        let mut h0_eff = ops.h0.clone();
        for (rate, l) in &ops.jumps {
            h0_eff -= l.adjoint() * l * Complex64::new(0.0, 0.5 * rate);
        }
        let max_frequency = detunings
            .deltas()
            .iter()
            .map(|d| d.abs())
            .chain(cfg.modes.iter().flat_map(|m| [m.omega, m.g0.abs(), m.gamma]))
            .chain(std::iter::once(cfg.kappa))
            .fold(0.0, f64::max);
        Ok(MasterEquation {
            dim: cfg.dim(),
            h0_eff: SparseOp::from_dense(&h0_eff),
            a: SparseOp::from_dense(&ops.a),
            a_dag: SparseOp::from_dense(&ops.a.adjoint()),
            jumps: ops
                .jumps
                .iter()
                .map(|(r, l)| (*r, SparseOp::from_dense(l)))
                .collect(),
            deltas: detunings.deltas().to_vec(),
            max_frequency,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest characteristic frequency used by the step-size rule.
    pub fn max_frequency(&self) -> f64 {
        self.max_frequency
    }

    /// Writes `dρ/dt` for a Hermitian `rho` into `out`.
    fn rhs_into(&self, rho: &[Complex64], t: f64, amps: &[f64], x: &mut [Complex64], scratch: &mut [Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        x.fill(C0);
        self.h0_eff.mul_acc(C1, rho, x);
        let c = drive_coefficient(&self.deltas, amps, t);
        if c != C0 {
            self.a_dag.mul_acc(c, rho, x);
            self.a.mul_acc(c.conj(), rho, x);
        }
        for j in 0..d {
            for i in 0..d {
                // −i (X − X†)
                let v = x[i + d * j] - x[j + d * i].conj();
                out[i + d * j] = Complex64::new(v.im, -v.re);
            }
        }
        for (rate, l) in &self.jumps {
            l.sandwich_acc(Complex64::new(*rate, 0.0), rho, scratch, out);
        }
    }
}

/// Step-size and invariant-checking options of [`Propagator`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    /// Upper bound on `max_frequency · h` for the RK4 substep `h`.
    pub accuracy: f64,
    /// Abort when `|Tr ρ − 1|` exceeds this after a step.
    pub trace_tolerance: f64,
    /// Check the minimum eigenvalue against `−POSITIVITY_TOL` after each step.
    pub check_positivity: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            accuracy: 0.05,
            trace_tolerance: 1e-6,
            check_positivity: true,
        }
    }
}

const MAX_SUBSTEPS: usize = 50_000_000;

/// Fixed-step RK4 propagator with preallocated work buffers.
#[derive(Debug, Clone)]
pub struct Propagator {
    eq: MasterEquation,
    opts: IntegratorOptions,
    dims: Vec<usize>,
    k: [Vec<Complex64>; 4],
    stage: Vec<Complex64>,
    x: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Propagator {
    pub fn new(cfg: &SystemConfig, detunings: &DetuningSet, opts: IntegratorOptions) -> Result<Self> {
        if !(opts.accuracy.is_finite() && opts.accuracy > 0.0) {
            return Err(Error::param("accuracy", "must be > 0"));
        }
        let eq = MasterEquation::new(cfg, detunings)?;
        let n = eq.dim * eq.dim;
        let buf = || vec![C0; n];
        Ok(Propagator {
            eq,
            opts,
            dims: cfg.dims(),
            k: [buf(), buf(), buf(), buf()],
            stage: buf(),
            x: buf(),
            scratch: buf(),
        })
    }

    pub fn options(&self) -> IntegratorOptions {
        self.opts
    }

    /// Number of RK4 substeps used to cross an interval of length `dt`.
    pub fn substeps(&self, dt: f64) -> Result<usize> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::StepUnderflow { dt, substeps: 0 });
        }
        let n = (self.eq.max_frequency * dt / self.opts.accuracy).ceil().max(1.0);
        if n > MAX_SUBSTEPS as f64 || dt / n == 0.0 {
            return Err(Error::StepUnderflow { dt, substeps: n as usize });
        }
        Ok(n as usize)
    }

    /// Advances `rho` from `t0` to `t0 + dt` with constant amplitudes `amps`.
    pub fn advance(&mut self, rho: &mut DensityMatrix, t0: f64, dt: f64, amps: &[f64]) -> Result<()> {
        if rho.dims() != self.dims.as_slice() {
            return Err(Error::shape(format!("dims {:?}", self.dims), format!("{:?}", rho.dims())));
        }
        if amps.len() != self.eq.deltas.len() {
            return Err(Error::shape(format!("{} amplitudes", self.eq.deltas.len()), amps.len()));
        }
        let n = self.substeps(dt)?;
        let h = dt / n as f64;
        let y = rho.data.as_mut_slice();
        let Propagator {
            eq,
            k,
            stage,
            x,
            scratch,
            ..
        } = self;
        let [k1, k2, k3, k4] = k;
        for i in 0..n {
            let t = t0 + i as f64 * h;
            eq.rhs_into(y, t, amps, x, scratch, k1);
            axpy_into(stage, y, 0.5 * h, k1);
            eq.rhs_into(stage, t + 0.5 * h, amps, x, scratch, k2);
            axpy_into(stage, y, 0.5 * h, k2);
            eq.rhs_into(stage, t + 0.5 * h, amps, x, scratch, k3);
            axpy_into(stage, y, h, k3);
            eq.rhs_into(stage, t + h, amps, x, scratch, k4);
            let w = h / 6.0;
            for j in 0..y.len() {
                y[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * w;
            }
        }
        rho.symmetrize();
        self.check(rho, t0 + dt)
    }

    fn check(&self, rho: &DensityMatrix, t: f64) -> Result<()> {
        if rho.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvariantViolation {
                t,
                what: "non-finite entries".into(),
            });
        }
        let te = rho.trace_error();
        if te > self.opts.trace_tolerance {
            return Err(Error::InvariantViolation {
                t,
                what: format!("trace error {te:e}"),
            });
        }
        if self.opts.check_positivity {
            let ev = rho.min_eigenvalue();
            if ev < -POSITIVITY_TOL {
                return Err(Error::InvariantViolation {
                    t,
                    what: format!("minimum eigenvalue {ev:e}"),
                });
            }
        }
        Ok(())
    }
}

fn axpy_into(dst: &mut [Complex64], y: &[Complex64], a: f64, k: &[Complex64]) {
    for ((d, y), k) in dst.iter_mut().zip(y).zip(k) {
        *d = *y + *k * a;
    }
}

/// Advances `rho` across the control step that starts at `t`.
pub fn evolve_step(
    rho: &DensityMatrix,
    t: f64,
    sched: &PulseSchedule,
    cfg: &SystemConfig,
) -> Result<DensityMatrix> {
    let s = sched.step_of(t)?;
    let on_grid = (t - sched.time_of(s)).abs() <= 1e-9 * sched.total_time().max(1.0);
    if !on_grid {
        return Err(Error::param("t", format!("{t} is not on the step grid")));
    }
    let mut prop = Propagator::new(cfg, sched.detunings(), IntegratorOptions::default())?;
    let mut next = rho.clone();
    prop.advance(&mut next, t, sched.dt(), &sched.amplitudes()[s])?;
    Ok(next)
}

/// States visited over an episode. Holds `S + 1` states when recorded,
/// otherwise only the final state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Integrates a whole schedule starting from `rho0`.
pub fn evolve_episode(
    rho0: &DensityMatrix,
    sched: &PulseSchedule,
    cfg: &SystemConfig,
    record: bool,
) -> Result<Trajectory> {
    evolve_episode_with(rho0, sched, cfg, record, IntegratorOptions::default())
}

pub fn evolve_episode_with(
    rho0: &DensityMatrix,
    sched: &PulseSchedule,
    cfg: &SystemConfig,
    record: bool,
    opts: IntegratorOptions,
) -> Result<Trajectory> {
    rho0.validate(opts.check_positivity)?;
    let mut prop = Propagator::new(cfg, sched.detunings(), opts)?;
    let mut rho = rho0.clone();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![rho0.clone()],
    };
    for s in 0..sched.steps() {
        let t = sched.time_of(s);
        prop.advance(&mut rho, t, sched.dt(), &sched.amplitudes()[s])?;
        if record {
            traj.times.push(sched.time_of(s + 1));
            traj.states.push(rho.clone());
        }
    }
    if !record {
        traj.times = vec![sched.total_time()];
        traj.states = vec![rho];
    }
    Ok(traj)
}

/// One row of the per-step trajectory export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub t: f64,
    pub trace_error: f64,
    pub fidelity: f64,
    pub purity: f64,
}

/// Writes `step,t,trace_error,fidelity,purity` rows.
pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::TargetSpec;
    use crate::hilbert::{carrier_detunings, MechanicalMode};

    fn small_cfg(g0: f64, kappa: f64, gamma: f64, n_th: f64) -> SystemConfig {
        SystemConfig::single(
            2,
            kappa,
            MechanicalMode {
                omega: 1.0,
                g0,
                gamma,
                n_th,
                dim: 4,
            },
        )
        .unwrap()
    }

    fn schedule(cfg: &SystemConfig, amps: Vec<Vec<f64>>, total: f64) -> PulseSchedule {
        let det = carrier_detunings(&TargetSpec::fock(2), cfg).unwrap();
        PulseSchedule::new(det, amps, total, 0.5).unwrap()
    }

    fn random_state(d: usize, dims: Vec<usize>, seed: u64) -> DensityMatrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / (1u64 << 53) as f64 - 0.5
        };
        let g = DMatrix::from_fn(d, d, |_, _| Complex64::new(next(), next()));
        let m = &g * g.adjoint();
        let tr = m.trace();
        DensityMatrix::from_matrix(m / tr, dims).unwrap()
    }

    #[test]
    fn undriven_hamiltonian() {
        let cfg = small_cfg(0.6, 0.0, 0.0, 0.0);
        let sched = schedule(&cfg, vec![vec![0.0, 0.0]], 1.0);
        let h = hamiltonian_at(0.3, &sched, &cfg).unwrap();
        let lad = joint_ladders(&cfg).unwrap();
        let (a, b) = (&lad.a, &lad.b[0]);
        let expect = b.adjoint() * b - a.adjoint() * a * (b + b.adjoint()) * Complex64::new(0.6, 0.0);
        assert!((h - expect).camax() < 1e-15);
        assert!(hamiltonian_at(1.5, &sched, &cfg).is_err());
    }

    #[test]
    fn driven_hamiltonian_is_hermitian() {
        let cfg = small_cfg(0.6, 0.0, 0.0, 0.0);
        let sched = schedule(&cfg, vec![vec![0.3, -0.2], vec![-0.1, 0.45]], 2.0);
        for t in [0.0, 0.7, 1.3, 2.0] {
            let h = hamiltonian_at(t, &sched, &cfg).unwrap();
            assert!((h.adjoint() - &h).camax() < 1e-14);
        }
    }

    #[test]
    fn drive_matrix_element_without_coupling() {
        let cfg = small_cfg(0.0, 0.0, 0.0, 0.0);
        let det = DetuningSet::from_shifts(&cfg, vec![vec![0]]).unwrap();
        // g0 = 0 puts the single carrier at zero detuning; use a shifted one too
        let det2 = DetuningSet::from_shifts(&cfg, vec![vec![0], vec![1]]).unwrap();
        let t = 0.37;
        let sched = PulseSchedule::new(det, vec![vec![0.2]], 1.0, 0.5).unwrap();
        let h = hamiltonian_at(t, &sched, &cfg).unwrap();
        let d = 4;
        for n in 0..d {
            assert!((h[(d + n, n)] - Complex64::new(0.2, 0.0)).norm() < 1e-15);
        }
        let sched = PulseSchedule::new(det2, vec![vec![0.0, 0.2]], 1.0, 0.5).unwrap();
        let h = hamiltonian_at(t, &sched, &cfg).unwrap();
        let want = Complex64::from_polar(0.2, t); // Δ = −1
        assert!((h[(d + 1, 1)] - want).norm() < 1e-15);
    }

    #[test]
    fn dissipator_examples() {
        let a = crate::hilbert::annihilation_op(crate::hilbert::ModeSpace::new(2).unwrap());
        let one = DensityMatrix::basis(1, vec![2]).unwrap();
        let out = lindblad_dissipator(&a, one.matrix()).unwrap();
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C1, -C1]));
        assert!((out - expect).camax() < 1e-15);

        let cfg = small_cfg(0.5, 0.0, 0.0, 0.0);
        let lad = joint_ladders(&cfg).unwrap();
        let vac = DensityMatrix::basis(2, cfg.dims()).unwrap(); // |0⟩_a ⊗ |2⟩_b
        assert!(lindblad_dissipator(&lad.a, vac.matrix()).unwrap().camax() < 1e-15);

        let rho = random_state(8, cfg.dims(), 3);
        let o = random_state(8, cfg.dims(), 4).into_matrix();
        assert!(lindblad_dissipator(&o, rho.matrix()).unwrap().trace().norm() < 1e-14);
        assert!(lindblad_dissipator(&DMatrix::identity(3, 3), rho.matrix()).is_err());
    }

    #[test]
    fn rhs_vanishes_on_ground_state() {
        let cfg = small_cfg(0.839, 0.01, 0.02, 0.0);
        let sched = schedule(&cfg, vec![vec![0.0, 0.0]], 1.0);
        let out = master_rhs(&DensityMatrix::ground(&cfg), 0.4, &sched, &cfg).unwrap();
        assert!(out.camax() < 1e-12);
    }

    #[test]
    fn rhs_is_traceless_and_matches_sparse_form() {
        let cfg = small_cfg(0.839, 0.03, 0.02, 0.7);
        let sched = schedule(&cfg, vec![vec![0.21, -0.33]], 1.0);
        let rho = random_state(8, cfg.dims(), 11);
        let t = 0.61;
        let dense = master_rhs(&rho, t, &sched, &cfg).unwrap();
        assert!(dense.trace().norm() < 1e-13);

        let eq = MasterEquation::new(&cfg, sched.detunings()).unwrap();
        let n = 64;
        let (mut x, mut sc, mut out) = (vec![C0; n], vec![C0; n], vec![C0; n]);
        eq.rhs_into(rho.matrix().as_slice(), t, &sched.amplitudes()[0], &mut x, &mut sc, &mut out);
        let sparse = DMatrix::from_column_slice(8, 8, &out);
        assert!((sparse - dense).camax() < 1e-13);
    }

    #[test]
    fn cavity_decay_rate_from_rhs() {
        let cfg = small_cfg(0.0, 0.07, 0.0, 0.0);
        let sched = schedule(&cfg, vec![vec![0.0, 0.0]], 1.0);
        let rho = DensityMatrix::basis(4 + 1, cfg.dims()).unwrap(); // |1⟩_a|1⟩_b
        let out = master_rhs(&rho, 0.0, &sched, &cfg).unwrap();
        let n_a = {
            let lad = joint_ladders(&cfg).unwrap();
            lad.a.adjoint() * lad.a
        };
        let dn = (&n_a * out).trace().re;
        assert!((dn + 0.07).abs() < 1e-14);
    }

    #[test]
    fn zero_generator_is_identity_map() {
        let cfg = SystemConfig::single(
            2,
            0.0,
            MechanicalMode {
                omega: 1.0,
                g0: 0.0,
                gamma: 0.0,
                n_th: 0.0,
                dim: 2,
            },
        )
        .unwrap();
        // only the diagonal populations are invariant under ω b†b
        let rho = DensityMatrix::from_matrix(
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                Complex64::new(0.4, 0.0),
                Complex64::new(0.3, 0.0),
                Complex64::new(0.2, 0.0),
                Complex64::new(0.1, 0.0),
            ])),
            cfg.dims(),
        )
        .unwrap();
        let det = DetuningSet::from_shifts(&cfg, vec![vec![0]]).unwrap();
        let sched = PulseSchedule::zeros(det, 3, 3.0, 0.1).unwrap();
        let next = evolve_step(&rho, 1.0, &sched, &cfg).unwrap();
        assert_eq!(next, rho);
    }

    #[test]
    fn pure_cavity_decay_over_one_step() {
        let kappa = 0.2;
        let cfg = small_cfg(0.0, kappa, 0.0, 0.0);
        let sched = schedule(&cfg, vec![vec![0.0, 0.0]; 4], 4.0);
        let rho = DensityMatrix::basis(4, cfg.dims()).unwrap(); // |1⟩_a|0⟩_b
        let next = evolve_step(&rho, 0.0, &sched, &cfg).unwrap();
        let p1 = next.matrix()[(4, 4)].re;
        assert!((p1 - (-kappa).exp()).abs() < 1e-10, "{p1}");
    }

    #[test]
    fn half_steps_agree_with_full_step() {
        let cfg = small_cfg(0.5, 0.01, 0.02, 0.1);
        let det = carrier_detunings(&TargetSpec::fock(2), &cfg).unwrap();
        let full = PulseSchedule::new(det.clone(), vec![vec![0.2, -0.3]], 1.0, 0.5).unwrap();
        let half = PulseSchedule::new(det, vec![vec![0.2, -0.3]; 2], 1.0, 0.5).unwrap();
        let rho0 = DensityMatrix::ground(&cfg);
        let a = evolve_step(&rho0, 0.0, &full, &cfg).unwrap();
        let mid = evolve_step(&rho0, 0.0, &half, &cfg).unwrap();
        let b = evolve_step(&mid, 0.5, &half, &cfg).unwrap();
        let diff = (a.matrix() - b.matrix()).camax();
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn evolve_step_rejects_off_grid_time() {
        let cfg = small_cfg(0.5, 0.0, 0.0, 0.0);
        let sched = schedule(&cfg, vec![vec![0.0, 0.0]; 2], 2.0);
        assert!(evolve_step(&DensityMatrix::ground(&cfg), 0.5, &sched, &cfg).is_err());
    }

    #[test]
    fn episode_lengths() {
        let cfg = small_cfg(0.5, 0.01, 0.0, 0.0);
        let sched = schedule(&cfg, vec![vec![0.1, 0.1]; 5], 5.0);
        let rho0 = DensityMatrix::ground(&cfg);
        let rec = evolve_episode(&rho0, &sched, &cfg, true).unwrap();
        assert_eq!(rec.states.len(), 6);
        let fin = evolve_episode(&rho0, &sched, &cfg, false).unwrap();
        assert_eq!(fin.states.len(), 1);
        assert_eq!(fin.final_state(), rec.final_state());

        let one = schedule(&cfg, vec![vec![0.1, 0.1]], 1.0);
        let ep = evolve_episode(&rho0, &one, &cfg, false).unwrap();
        let st = evolve_step(&rho0, 0.0, &one, &cfg).unwrap();
        assert_eq!(ep.final_state(), &st);
    }

    #[test]
    fn substep_rule() {
        let cfg = small_cfg(0.839, 0.0, 0.0, 0.0);
        let det = carrier_detunings(&TargetSpec::fock(2), &cfg).unwrap();
        let prop = Propagator::new(&cfg, &det, IntegratorOptions::default()).unwrap();
        let wmax = 0.839f64.powi(2) + 2.0;
        assert_eq!(prop.substeps(1.0).unwrap(), (wmax / 0.05).ceil() as usize);
        assert!(matches!(prop.substeps(0.0), Err(Error::StepUnderflow { .. })));
        assert!(matches!(prop.substeps(1e12), Err(Error::StepUnderflow { .. })));
    }

    #[test]
    fn schedule_contract() {
        let cfg = small_cfg(0.5, 0.0, 0.0, 0.0);
        let det = carrier_detunings(&TargetSpec::fock(2), &cfg).unwrap();
        assert!(PulseSchedule::new(det.clone(), vec![vec![0.6, 0.0]], 1.0, 0.5).is_err());
        assert!(PulseSchedule::new(det.clone(), vec![], 1.0, 0.5).is_err());
        let mut s = PulseSchedule::zeros(det, 4, 8.0, 0.5).unwrap();
        assert_eq!(s.dt(), 2.0);
        assert_eq!(s.step_of(8.0).unwrap(), 3);
        assert_eq!(s.step_of(2.0).unwrap(), 1);
        s.set_step(2, &[3.0, -0.1]).unwrap();
        assert_eq!(s.amplitudes()[2], vec![0.5, -0.1]);
        assert_eq!(s.peak_amplitude(), 0.5);
    }

    #[test]
    fn density_matrix_checks() {
        let rho = DensityMatrix::maximally_mixed(vec![5]);
        assert!(rho.validate(true).is_ok());
        assert!((rho.purity() - 0.2).abs() < 1e-15);
        let bad = DensityMatrix::from_matrix(DMatrix::identity(2, 2), vec![2]).unwrap();
        assert!(bad.validate(false).is_err());
        assert!(DensityMatrix::from_matrix(DMatrix::identity(2, 2), vec![3]).is_err());
    }
}
