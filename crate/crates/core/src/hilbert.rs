// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Truncated mode spaces, system parameters and the eigenbasis algebra of the
//! undriven optomechanical Hamiltonian.
//!
//! Frequencies, couplings and rates are dimensionless, measured in units of a
//! reference mechanical frequency (the first mechanical mode's frequency in
//! every preset). Joint states are ordered with the cavity index slowest,
//! then mechanical mode 1, then mechanical mode 2.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::{BellState, TargetSpec};
use crate::error::{Error, Result};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Fock truncation of a single bosonic mode, spanning `|0⟩ .. |dim-1⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeSpace(usize);

impl ModeSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::param("dim", format!("truncation must be >= 2, got {dim}")));
        }
        Ok(ModeSpace(dim))
    }

    pub fn dim(self) -> usize {
        self.0
    }
}

/// One mechanical resonator: frequency, coupling to the cavity photon number,
/// damping, bath occupation and Fock truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalMode {
    pub omega: f64,
    pub g0: f64,
    pub gamma: f64,
    pub n_th: f64,
    pub dim: usize,
}

impl MechanicalMode {
    /// Single-photon displacement `g0 / omega`.
    pub fn beta(&self) -> f64 {
        self.g0 / self.omega
    }

    /// Photon-number-squared energy shift `g0² / omega`.
    pub fn chi(&self) -> f64 {
        self.g0 * self.g0 / self.omega
    }

    /// Bath temperature in units of the mode frequency, `k_B T / ħω`, obtained
    /// by inverting the Bose occupation. Zero occupation maps to zero.
    pub fn thermal_energy_ratio(&self) -> f64 {
        if self.n_th <= 0.0 {
            0.0
        } else {
            1.0 / (1.0 + 1.0 / self.n_th).ln()
        }
    }

    fn validate(&self, which: usize) -> Result<()> {
        let tag = |s: &'static str| -> &'static str {
            match (which, s) {
                (0, "omega") => "omega_m",
                (0, "g0") => "g0",
                (0, "gamma") => "gamma_m",
                (0, "n_th") => "n_th",
                (0, _) => "mech_dim",
                (1, "omega") => "omega_m1",
                (1, "g0") => "g01",
                (1, "gamma") => "gamma_m1",
                (1, "n_th") => "n_th1",
                (1, _) => "mech_dim1",
                (_, "omega") => "omega_m2",
                (_, "g0") => "g02",
                (_, "gamma") => "gamma_m2",
                (_, "n_th") => "n_th2",
                (_, _) => "mech_dim2",
            }
        };
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::param(tag("omega"), format!("must be finite and > 0, got {}", self.omega)));
        }
        if !self.g0.is_finite() {
            return Err(Error::param(tag("g0"), "must be finite"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::param(tag("gamma"), format!("must be >= 0, got {}", self.gamma)));
        }
        if !(self.n_th.is_finite() && self.n_th >= 0.0) {
            return Err(Error::param(tag("n_th"), format!("must be >= 0, got {}", self.n_th)));
        }
        if self.dim < 2 {
            return Err(Error::param(tag("dim"), format!("truncation must be >= 2, got {}", self.dim)));
        }
        if !(self.beta().is_finite() && self.chi().is_finite()) {
            return Err(Error::param(tag("g0"), "derived beta/chi not finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Single,
    Double,
}

/// Physical and truncation parameters of a one- or two-resonator system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub cavity_dim: usize,
    pub kappa: f64,
    pub modes: Vec<MechanicalMode>,
}

impl SystemConfig {
    pub fn single(cavity_dim: usize, kappa: f64, mode: MechanicalMode) -> Result<Self> {
        let cfg = SystemConfig {
            cavity_dim,
            kappa,
            modes: vec![mode],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn double(
        cavity_dim: usize,
        kappa: f64,
        mode1: MechanicalMode,
        mode2: MechanicalMode,
    ) -> Result<Self> {
        let cfg = SystemConfig {
            cavity_dim,
            kappa,
            modes: vec![mode1, mode2],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cavity_dim < 2 {
            return Err(Error::param(
                "cavity_dim",
                format!("truncation must be >= 2, got {}", self.cavity_dim),
            ));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::param("kappa", format!("must be >= 0, got {}", self.kappa)));
        }
        match self.modes.len() {
            1 => self.modes[0].validate(0),
            2 => {
                self.modes[0].validate(1)?;
                self.modes[1].validate(2)
            }
            n => Err(Error::param("modes", format!("expected 1 or 2 mechanical modes, got {n}"))),
        }
    }

    pub fn kind(&self) -> SystemKind {
        if self.modes.len() == 1 {
            SystemKind::Single
        } else {
            SystemKind::Double
        }
    }

    /// Subsystem dimensions in basis order: cavity, then mechanical modes.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.cavity_dim)
            .chain(self.modes.iter().map(|m| m.dim))
            .collect()
    }

    pub fn mech_dims(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.dim).collect()
    }

    /// Dimension of the joint space.
    pub fn dim(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn mech_dim(&self) -> usize {
        self.mech_dims().iter().product()
    }

    /// Sum of the per-mode photon-number shifts χ_i.
    pub fn chi_total(&self) -> f64 {
        self.modes.iter().map(MechanicalMode::chi).sum()
    }

    /// Reference frequency ω_ref (first mechanical mode).
    pub fn omega_ref(&self) -> f64 {
        self.modes[0].omega
    }
}

/// Truncated annihilation operator: `M[n-1, n] = √n`.
pub fn annihilation_op(space: ModeSpace) -> DMatrix<Complex64> {
    let d = space.dim();
    let mut m = DMatrix::from_element(d, d, C0);
    for n in 1..d {
        m[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    m
}

/// Matrix exponential of `β(b† − b)` on the truncated space.
pub fn displacement_matrix(beta: f64, space: ModeSpace) -> DMatrix<Complex64> {
    let d = space.dim();
    let mut gen = DMatrix::<f64>::zeros(d, d);
    for n in 1..d {
        let s = beta * (n as f64).sqrt();
        gen[(n, n - 1)] = s;
        gen[(n - 1, n)] = -s;
    }
    gen.exp().map(|x| Complex64::new(x, 0.0))
}

/// Associated Laguerre polynomial `L_n^k(x)` from the three-term recurrence
/// in `n` at fixed `k`.
pub fn laguerre_assoc(n: usize, k: i64, x: f64) -> f64 {
    let k = k as f64;
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + k - x;
    for j in 1..n {
        let j = j as f64;
        let next = ((2.0 * j + 1.0 + k - x) * cur - (j + k) * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `sqrt(a!/b!)` computed as a running product to stay finite.
fn sqrt_factorial_ratio(a: usize, b: usize) -> f64 {
    let (lo, hi, invert) = if a < b { (a, b, true) } else { (b, a, false) };
    let mut r = 1.0;
    for j in (lo + 1)..=hi {
        r *= (j as f64).sqrt();
    }
    if invert {
        1.0 / r
    } else {
        r
    }
}

/// Transition coefficient `A_{n,s}^{(m)} = √m ⟨n|D(−β)|s⟩` between the
/// displaced phonon states of adjacent photon subspaces.
pub fn displaced_fock_coeff(m: usize, n: usize, s: usize, beta: f64) -> f64 {
    let pre = (m as f64).sqrt() * (-beta * beta / 2.0).exp();
    let x = beta * beta;
    if n < s {
        pre * sqrt_factorial_ratio(n, s) * beta.powi((s - n) as i32)
            * laguerre_assoc(n, (s - n) as i64, x)
    } else {
        pre * sqrt_factorial_ratio(s, n) * (-beta).powi((n - s) as i32)
            * laguerre_assoc(s, (n - s) as i64, x)
    }
}

/// Exact Fock-basis element `⟨m|D(α)|n⟩` of the complex displacement
/// `exp(α b† − α* b)`, from the associated Laguerre form.
pub fn displacement_element(m: usize, n: usize, alpha: Complex64) -> Complex64 {
    let x = alpha.norm_sqr();
    let damp = (-x / 2.0).exp();
    if m >= n {
        alpha.powu((m - n) as u32)
            * (sqrt_factorial_ratio(n, m) * damp * laguerre_assoc(n, (m - n) as i64, x))
    } else {
        (-alpha.conj()).powu((n - m) as u32)
            * (sqrt_factorial_ratio(m, n) * damp * laguerre_assoc(m, (n - m) as i64, x))
    }
}

/// Two-resonator coefficient: `√m` times the product of the single-mode
/// overlaps `⟨n_i|D(−β_i)|s_i⟩`.
pub fn displaced_fock_coeff_two_mode(m: usize, n: [usize; 2], s: [usize; 2], beta: [f64; 2]) -> f64 {
    (m as f64).sqrt()
        * displaced_fock_coeff(1, n[0], s[0], beta[0])
        * displaced_fock_coeff(1, n[1], s[1], beta[1])
}

fn expect_kind(cfg: &SystemConfig, kind: SystemKind) -> Result<()> {
    if cfg.kind() != kind {
        return Err(Error::param(
            "kind",
            format!("operation requires a {kind:?} system, config is {:?}", cfg.kind()),
        ));
    }
    Ok(())
}

/// `E_{m,n} = n ω_M − m² χ`.
pub fn eigenenergy_single(m: usize, n: usize, cfg: &SystemConfig) -> Result<f64> {
    expect_kind(cfg, SystemKind::Single)?;
    let mode = &cfg.modes[0];
    let m = m as f64;
    Ok(n as f64 * mode.omega - m * m * mode.chi())
}

/// `E_{m,n1,n2} = n1 ω_M1 + n2 ω_M2 − (χ1 + χ2) m²`.
pub fn eigenenergy_double(m: usize, n1: usize, n2: usize, cfg: &SystemConfig) -> Result<f64> {
    expect_kind(cfg, SystemKind::Double)?;
    let m = m as f64;
    Ok(n1 as f64 * cfg.modes[0].omega + n2 as f64 * cfg.modes[1].omega - cfg.chi_total() * m * m)
}

/// Carrier detunings of the pulsed drives, one per pulse.
///
/// `shifts[l]` holds the phonon-number offsets (one per mechanical mode) of
/// the zero-photon state that pulse `l` connects to `|1, 0̃(1)⟩`; the first
/// pulse always has zero offset and drives `|0,0⟩ ↔ |1,0̃(1)⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningSet {
    deltas: Vec<f64>,
    shifts: Vec<Vec<usize>>,
}

impl DetuningSet {
    /// Builds a detuning set from phonon offsets, computing each detuning as
    /// `−Σχ_i − Σ N_i ω_i`.
    pub fn from_shifts(cfg: &SystemConfig, shifts: Vec<Vec<usize>>) -> Result<Self> {
        if shifts.is_empty() {
            return Err(Error::param("detunings", "at least one pulse is required"));
        }
        let nmodes = cfg.modes.len();
        if shifts.iter().any(|s| s.len() != nmodes) {
            return Err(Error::shape(format!("{nmodes} offsets per pulse"), "mismatched offsets"));
        }
        if shifts[0].iter().any(|&n| n != 0) {
            return Err(Error::param("detunings", "first pulse must have zero phonon offset"));
        }
        let chi = cfg.chi_total();
        let deltas = shifts
            .iter()
            .map(|s| {
                -chi - s
                    .iter()
                    .zip(&cfg.modes)
                    .map(|(&n, m)| n as f64 * m.omega)
                    .sum::<f64>()
            })
            .collect();
        Ok(DetuningSet { deltas, shifts })
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn shifts(&self) -> &[Vec<usize>] {
        &self.shifts
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

/// Resonant carrier detunings for a target state family.
pub fn carrier_detunings(target: &TargetSpec, cfg: &SystemConfig) -> Result<DetuningSet> {
    let shifts = match (target, cfg.kind()) {
        (TargetSpec::Fock(n), SystemKind::Single) => {
            let mut v = vec![vec![0]];
            if *n > 0 {
                v.push(vec![*n]);
            }
            v
        }
        (TargetSpec::Superposition(components), SystemKind::Single) => {
            let mut v = vec![vec![0]];
            v.extend(
                components
                    .iter()
                    .map(|(n, _)| *n)
                    .filter(|&n| n > 0)
                    .map(|n| vec![n]),
            );
            v
        }
        (TargetSpec::Bell(which), SystemKind::Double) => match which {
            BellState::PhiPlus | BellState::PhiMinus => vec![vec![0, 0], vec![1, 1]],
            BellState::PsiPlus | BellState::PsiMinus => vec![vec![0, 0], vec![1, 0], vec![0, 1]],
        },
        (t, k) => {
            return Err(Error::UnsupportedTarget(format!("{t:?} on a {k:?} system")));
        }
    };
    DetuningSet::from_shifts(cfg, shifts)
}

/// One off-resonant `m = 2` transition examined by [`validate_offresonance`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffResonantTransition {
    pub pulse: usize,
    /// Phonon indices in the two-photon subspace.
    pub upper: Vec<usize>,
    /// Phonon indices in the one-photon subspace.
    pub lower: Vec<usize>,
    pub detuning: f64,
    pub coefficient: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffResonanceReport {
    pub pass: bool,
    pub margin: f64,
    pub omega_max: f64,
    /// Smallest `|δ| / (|A| Ω_max)` over all examined transitions.
    pub worst_ratio: f64,
    pub worst: Option<OffResonantTransition>,
}

impl OffResonanceReport {
    /// Largest drive amplitude that would still satisfy the margin.
    pub fn max_compliant_amplitude(&self) -> f64 {
        self.worst_ratio * self.omega_max / self.margin
    }
}

/// Default margin standing in for "much greater than".
pub const DEFAULT_OFFRESONANCE_MARGIN: f64 = 10.0;

// Ratios that agree with the margin to within rounding count as violations.
const BOUNDARY_RTOL: f64 = 1e-12;

/// Checks that every `|1, ·⟩ → |2, ·⟩` transition is detuned by more than
/// `margin · |A^{(2)}| · omega_max` for every pulse carrier.
pub fn validate_offresonance(
    omega_max: f64,
    cfg: &SystemConfig,
    detunings: &DetuningSet,
    margin: f64,
) -> OffResonanceReport {
    let m = 2usize;
    let chi2 = 2.0 * (m as f64 - 1.0) * cfg.chi_total();
    let mut worst_ratio = f64::INFINITY;
    let mut worst: Option<OffResonantTransition> = None;

    let mut consider = |pulse: usize, upper: Vec<usize>, lower: Vec<usize>, delta: f64, a: f64| {
        let denom = a.abs() * omega_max.abs();
        let ratio = if denom == 0.0 { f64::INFINITY } else { delta.abs() / denom };
        if worst.is_none() || ratio < worst_ratio {
            worst_ratio = ratio;
            worst = Some(OffResonantTransition {
                pulse,
                upper,
                lower,
                detuning: delta,
                coefficient: a,
                ratio,
            });
        }
    };

    match cfg.kind() {
        SystemKind::Single => {
            let mode = cfg.modes[0];
            let beta = mode.beta();
            for (l, shift) in detunings.shifts().iter().enumerate() {
                for n in 0..mode.dim {
                    for s in 0..mode.dim {
                        let delta = (n as f64 - s as f64 + shift[0] as f64) * mode.omega - chi2;
                        let a = displaced_fock_coeff(m, n, s, beta);
                        consider(l, vec![n], vec![s], delta, a);
                    }
                }
            }
        }
        SystemKind::Double => {
            let (m1, m2) = (cfg.modes[0], cfg.modes[1]);
            let beta = [m1.beta(), m2.beta()];
            for (l, shift) in detunings.shifts().iter().enumerate() {
                for n1 in 0..m1.dim {
                    for n2 in 0..m2.dim {
                        for s1 in 0..m1.dim {
                            for s2 in 0..m2.dim {
                                let delta = (n1 as f64 - s1 as f64 + shift[0] as f64) * m1.omega
                                    + (n2 as f64 - s2 as f64 + shift[1] as f64) * m2.omega
                                    - chi2;
                                let a = displaced_fock_coeff_two_mode(m, [n1, n2], [s1, s2], beta);
                                consider(l, vec![n1, n2], vec![s1, s2], delta, a);
                            }
                        }
                    }
                }
            }
        }
    }

    OffResonanceReport {
        pass: worst_ratio > margin * (1.0 + BOUNDARY_RTOL),
        margin,
        omega_max,
        worst_ratio,
        worst,
    }
}

/// `|A^{(1)}_{N_l,N_l}|` for each pulse after the first: how strongly the
/// first carrier would re-excite the state a later pulse is meant to fill.
/// Small values mean the coupling sits near a Laguerre root.
pub fn suppression_coefficients(cfg: &SystemConfig, detunings: &DetuningSet) -> Vec<f64> {
    detunings
        .shifts()
        .iter()
        .skip(1)
        .map(|shift| match cfg.kind() {
            SystemKind::Single => displaced_fock_coeff(1, shift[0], shift[0], cfg.modes[0].beta()).abs(),
            SystemKind::Double => displaced_fock_coeff_two_mode(
                1,
                [shift[0], shift[1]],
                [shift[0], shift[1]],
                [cfg.modes[0].beta(), cfg.modes[1].beta()],
            )
            .abs(),
        })
        .collect()
}

/// Flat index of a mechanical multi-index (mode 1 slowest).
fn mech_index(n: &[usize], dims: &[usize]) -> usize {
    n.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

/// Resonant-transition Hamiltonian restricted to the zero- and one-photon
/// eigenstates `|m, ñ(m)⟩`, `m ∈ {0, 1}`, in the frame rotating with the
/// undriven Hamiltonian. Index `m · M + k` where `k` is the flat mechanical
/// index and `M` the mechanical dimension.
pub fn build_effective_hamiltonian(
    cfg: &SystemConfig,
    detunings: &DetuningSet,
    amplitudes: &[f64],
) -> Result<DMatrix<Complex64>> {
    if amplitudes.len() != detunings.len() {
        return Err(Error::shape(
            format!("{} amplitudes", detunings.len()),
            format!("{} amplitudes", amplitudes.len()),
        ));
    }
    let dims = cfg.mech_dims();
    let mdim = cfg.mech_dim();
    let betas: Vec<f64> = cfg.modes.iter().map(MechanicalMode::beta).collect();
    let mut h = DMatrix::from_element(2 * mdim, 2 * mdim, C0);

    for (shift, &omega) in detunings.shifts().iter().zip(amplitudes) {
        if omega == 0.0 {
            continue;
        }
        for k in 0..mdim {
            let mut n = vec![0usize; dims.len()];
            let mut rem = k;
            for (i, &d) in dims.iter().enumerate().rev() {
                n[i] = rem % d;
                rem /= d;
            }
            let lower: Vec<usize> = n.iter().zip(shift).map(|(a, b)| a + b).collect();
            if lower.iter().zip(&dims).any(|(&i, &d)| i >= d) {
                continue;
            }
            let coeff: f64 = n
                .iter()
                .zip(&lower)
                .zip(&betas)
                .map(|((&ni, &si), &b)| displaced_fock_coeff(1, ni, si, b))
                .product();
            let row = mdim + k;
            let col = mech_index(&lower, &dims);
            h[(row, col)] += Complex64::new(omega * coeff, 0.0);
        }
    }
    let adj = h.adjoint();
    Ok(h + adj)
}

/// Joint-space vector of the eigenstate `|m⟩_a ⊗ D(mβ_1)|n_1⟩ ⊗ D(mβ_2)|n_2⟩`.
pub fn dressed_state(cfg: &SystemConfig, m: usize, n: &[usize]) -> Result<DVector<Complex64>> {
    if n.len() != cfg.modes.len() {
        return Err(Error::shape(format!("{} phonon indices", cfg.modes.len()), n.len()));
    }
    if m >= cfg.cavity_dim {
        return Err(Error::param("m", format!("photon number {m} outside cavity truncation")));
    }
    let mut v = DVector::from_element(1, Complex64::new(1.0, 0.0));
    let mut cav = DVector::from_element(cfg.cavity_dim, C0);
    cav[m] = Complex64::new(1.0, 0.0);
    v = v.kronecker(&cav);
    for (mode, &ni) in cfg.modes.iter().zip(n) {
        if ni >= mode.dim {
            return Err(Error::param("n", format!("phonon index {ni} outside truncation")));
        }
        // pad so that truncation edge effects stay out of the kept block
        let padded = ModeSpace::new(mode.dim + 30)?;
        let d = displacement_matrix(m as f64 * mode.beta(), padded);
        let col = DVector::from_iterator(mode.dim, (0..mode.dim).map(|r| d[(r, ni)]));
        v = v.kronecker(&col);
    }
    Ok(v)
}

/// Embeds single-subsystem operators into the joint space (cavity first).
pub fn kron_all(ops: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    let mut acc = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    for op in ops {
        acc = acc.kronecker(op);
    }
    acc
}

/// Cavity and mechanical annihilation operators on the joint space.
#[derive(Debug, Clone)]
pub struct JointLadders {
    pub a: DMatrix<Complex64>,
    pub b: Vec<DMatrix<Complex64>>,
}

pub fn joint_ladders(cfg: &SystemConfig) -> Result<JointLadders> {
    let dims = cfg.dims();
    let ident = |d: usize| DMatrix::<Complex64>::identity(d, d);
    let mut factors: Vec<DMatrix<Complex64>> = dims.iter().map(|&d| ident(d)).collect();
    factors[0] = annihilation_op(ModeSpace::new(dims[0])?);
    let a = kron_all(&factors);
    let mut b = Vec::with_capacity(cfg.modes.len());
    for i in 1..dims.len() {
        let mut f: Vec<DMatrix<Complex64>> = dims.iter().map(|&d| ident(d)).collect();
        f[i] = annihilation_op(ModeSpace::new(dims[i])?);
        b.push(kron_all(&f));
    }
    Ok(JointLadders { a, b })
}
