// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Fidelities, reduced states, Wigner functions, Fock-basis maps and
//! logarithmic negativity.

use std::f64::consts::FRAC_2_PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::TargetSpec;
use crate::dynamics::DensityMatrix;
use crate::error::{Error, Result};
use crate::hilbert::displacement_element;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// `⟨ψ|ρ_b|ψ⟩` for a mechanical state (single- or two-mode).
pub fn fidelity(rho_b: &DensityMatrix, target: &TargetSpec) -> Result<f64> {
    let psi = target.state_vector(rho_b.dims())?;
    let f = (psi.adjoint() * rho_b.matrix() * &psi)[(0, 0)];
    Ok(f.re)
}

/// `⟨0_a ψ|ρ|0_a ψ⟩` for a joint cavity-mechanics state.
pub fn projected_fidelity(rho: &DensityMatrix, target: &TargetSpec) -> Result<f64> {
    let dims = rho.dims();
    if dims.len() < 2 {
        return Err(Error::shape("cavity and mechanical factors", format!("dims {dims:?}")));
    }
    let psi = target.state_vector(&dims[1..])?;
    let m = psi.len();
    let block = rho.matrix().view((0, 0), (m, m));
    let f = (psi.adjoint() * block * &psi)[(0, 0)];
    Ok(f.re)
}

/// Which factors of a joint cavity-mechanics state to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Cavity,
    /// All mechanical modes.
    Mechanics,
    /// One mechanical mode, zero-based.
    Mechanical(usize),
}

impl Subsystem {
    fn factors(self, nfactors: usize) -> Result<Vec<usize>> {
        match self {
            Subsystem::Cavity => Ok(vec![0]),
            Subsystem::Mechanics if nfactors >= 2 => Ok((1..nfactors).collect()),
            Subsystem::Mechanical(i) if i + 1 < nfactors => Ok(vec![i + 1]),
            other => Err(Error::param(
                "keep",
                format!("{other:?} not present in a {nfactors}-factor state"),
            )),
        }
    }
}

/// Reduced state of a joint cavity-mechanics state.
pub fn partial_trace(rho: &DensityMatrix, keep: Subsystem) -> Result<DensityMatrix> {
    partial_trace_factors(rho, &keep.factors(rho.dims().len())?)
}

fn digits(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = index % d;
        index /= d;
    }
    out
}

/// Traces out every factor not listed in `keep` (indices into `rho.dims()`,
/// strictly increasing).
pub fn partial_trace_factors(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let dims = rho.dims();
    if keep.is_empty() || keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::param("keep", format!("invalid factor list {keep:?} for dims {dims:?}")));
    }
    let kept_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let dk: usize = kept_dims.iter().product();
    let d = rho.dim();

    // (kept flat index, traced flat index) of every joint index
    let split: Vec<(usize, usize)> = (0..d)
        .map(|i| {
            let dig = digits(i, dims);
            let (mut a, mut b) = (0, 0);
            for (f, &x) in dig.iter().enumerate() {
                if keep.contains(&f) {
                    a = a * dims[f] + x;
                } else {
                    b = b * dims[f] + x;
                }
            }
            (a, b)
        })
        .collect();

    let m = rho.matrix();
    let mut out = DMatrix::from_element(dk, dk, C0);
    for i in 0..d {
        for j in 0..d {
            if split[i].1 == split[j].1 {
                out[(split[i].0, split[j].0)] += m[(i, j)];
            }
        }
    }
    DensityMatrix::from_matrix(out, kept_dims)
}

/// Phase-space window of a Wigner evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WignerGridSpec {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl Default for WignerGridSpec {
    fn default() -> Self {
        WignerGridSpec {
            re_min: -4.0,
            re_max: 4.0,
            im_min: -4.0,
            im_max: 4.0,
            n_re: 81,
            n_im: 81,
        }
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Wigner function samples; `values[(i, j)]` is `W(re[i] + i·im[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl WignerGrid {
    /// Rectangle-rule integral of `W` over the grid.
    pub fn integral(&self) -> f64 {
        let h = |v: &[f64]| if v.len() > 1 { v[1] - v[0] } else { 1.0 };
        self.values.sum() * h(&self.re) * h(&self.im)
    }
}

/// `W(η) = (2/π) Tr[D†(η) ρ_b D(η) (−1)^{b†b}]` on a grid.
///
/// Uses `D(η)(−1)^{b†b}D†(η) = D(2η)(−1)^{b†b}`, so only the elements
/// `⟨m|D(2η)|n⟩` with `m, n` inside the state's own truncation are needed;
/// these are evaluated in closed form and carry no truncation bias.
pub fn wigner(rho_b: &DensityMatrix, spec: &WignerGridSpec) -> Result<WignerGrid> {
    if rho_b.dims().len() != 1 {
        return Err(Error::shape("single-mode state", format!("dims {:?}", rho_b.dims())));
    }
    if spec.n_re == 0 || spec.n_im == 0 {
        return Err(Error::param("grid", "resolution must be >= 1"));
    }
    let n = rho_b.dim();
    let rho = rho_b.matrix();
    let re = axis(spec.re_min, spec.re_max, spec.n_re);
    let im = axis(spec.im_min, spec.im_max, spec.n_im);
    let mut values = DMatrix::zeros(re.len(), im.len());
    for (i, &x) in re.iter().enumerate() {
        for (j, &y) in im.iter().enumerate() {
            let alpha = Complex64::new(2.0 * x, 2.0 * y);
            let mut acc = C0;
            for c in 0..n {
                let mut col = C0;
                for r in 0..n {
                    col += rho[(c, r)] * displacement_element(r, c, alpha);
                }
                acc += if c % 2 == 0 { col } else { -col };
            }
            values[(i, j)] = FRAC_2_PI * acc.re;
        }
    }
    Ok(WignerGrid { re, im, values })
}

/// Elementwise `|ρ_{nm}|`.
pub fn fock_matrix_map(rho_b: &DensityMatrix) -> DMatrix<f64> {
    rho_b.matrix().map(|z| z.norm())
}

/// Transposes the bra/ket indices of factor `which` (zero-based in `rho.dims()`).
pub fn partial_transpose(rho: &DensityMatrix, which: usize) -> Result<DMatrix<Complex64>> {
    let dims = rho.dims();
    if which >= dims.len() {
        return Err(Error::param("mode", format!("factor {which} outside dims {dims:?}")));
    }
    let d = rho.dim();
    let stride: usize = dims[which + 1..].iter().product();
    let dw = dims[which];
    let m = rho.matrix();
    let mut out = DMatrix::from_element(d, d, C0);
    for i in 0..d {
        let ki = (i / stride) % dw;
        for j in 0..d {
            let kj = (j / stride) % dw;
            // swap the `which` digit between row and column
            let i2 = i - ki * stride + kj * stride;
            let j2 = j - kj * stride + ki * stride;
            out[(i2, j2)] = m[(i, j)];
        }
    }
    Ok(out)
}

/// `log₂ ‖ρ^{T_2}‖₁` of a two-mode state, transposing the second mode.
pub fn log_negativity(rho: &DensityMatrix) -> Result<f64> {
    if rho.dims().len() != 2 {
        return Err(Error::shape("two-mode state", format!("dims {:?}", rho.dims())));
    }
    let pt = partial_transpose(rho, 1)?;
    let herm = (&pt + pt.adjoint()) * Complex64::new(0.5, 0.0);
    let norm: f64 = herm.symmetric_eigenvalues().iter().map(|e| e.abs()).sum();
    Ok(norm.log2().max(0.0))
}

#[derive(Serialize)]
struct WignerRow {
    re_eta: f64,
    im_eta: f64,
    w: f64,
}

/// Writes `re_eta,im_eta,w` rows, real axis outermost.
pub fn write_wigner_csv(path: &Path, grid: &WignerGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, &x) in grid.re.iter().enumerate() {
        for (j, &y) in grid.im.iter().enumerate() {
            w.serialize(WignerRow {
                re_eta: x,
                im_eta: y,
                w: grid.values[(i, j)],
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct MapRow {
    row: usize,
    col: usize,
    value: f64,
}

/// Writes `row,col,value` rows of a Fock-basis map.
pub fn write_matrix_map_csv(path: &Path, map: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in 0..map.nrows() {
        for col in 0..map.ncols() {
            w.serialize(MapRow {
                row,
                col,
                value: map[(row, col)],
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::BellState;
    use nalgebra::DVector;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn ket(v: &[f64]) -> DVector<Complex64> {
        DVector::from_iterator(v.len(), v.iter().map(|&x| c(x)))
    }

    fn diag_state(p: &[f64]) -> DensityMatrix {
        let m = DMatrix::from_diagonal(&ket(p));
        DensityMatrix::from_matrix(m, vec![p.len()]).unwrap()
    }

    fn kron(a: &DensityMatrix, b: &DensityMatrix) -> DensityMatrix {
        let dims = a.dims().iter().chain(b.dims()).copied().collect();
        DensityMatrix::from_matrix(a.matrix().kronecker(b.matrix()), dims).unwrap()
    }

    #[test]
    fn fidelity_examples() {
        let t = TargetSpec::equal_superposition(&[0, 2]).unwrap();
        let psi = t.state_vector(&[4]).unwrap();
        let pure = DensityMatrix::pure(&psi, vec![4]).unwrap();
        assert!((fidelity(&pure, &t).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(fidelity(&diag_state(&[0.0, 1.0, 0.0, 0.0]), &t).unwrap(), 0.0);
        let mixed = DensityMatrix::maximally_mixed(vec![5]);
        assert!((fidelity(&mixed, &TargetSpec::fock(3)).unwrap() - 0.2).abs() < 1e-12);
        assert!(fidelity(&mixed, &TargetSpec::bell(BellState::PhiPlus)).is_err());
    }

    #[test]
    fn fidelity_ignores_global_phase() {
        let t1 = TargetSpec::superposition(vec![(0, c(0.6)), (1, Complex64::new(0.0, 0.8))]).unwrap();
        let ph = Complex64::from_polar(1.0, 1.1);
        let t2 = TargetSpec::superposition(vec![(0, c(0.6) * ph), (1, Complex64::new(0.0, 0.8) * ph)]).unwrap();
        let psi = ket(&[0.3, 0.5, 0.81]).normalize();
        let rho = DensityMatrix::pure(&(psi + t1.state_vector(&[3]).unwrap()), vec![3]).unwrap();
        let (a, b) = (fidelity(&rho, &t1).unwrap(), fidelity(&rho, &t2).unwrap());
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn partial_trace_of_product() {
        let ra = diag_state(&[0.7, 0.2, 0.1]);
        let psi = ket(&[0.6, 0.0, 0.8]);
        let rb = DensityMatrix::pure(&psi, vec![3]).unwrap();
        let joint = kron(&ra, &rb);
        let out = partial_trace(&joint, Subsystem::Mechanics).unwrap();
        assert!((out.matrix() - rb.matrix()).camax() < 1e-15);
        let out = partial_trace(&joint, Subsystem::Cavity).unwrap();
        assert!((out.matrix() - ra.matrix()).camax() < 1e-15);
        assert!((out.trace() - joint.trace()).norm() < 1e-15);
        assert!(partial_trace(&rb, Subsystem::Mechanics).is_err());
    }

    #[test]
    fn bell_marginal_is_mixed() {
        let v = TargetSpec::bell(BellState::PhiPlus).state_vector(&[3, 3]).unwrap();
        let cav = ket(&[1.0, 0.0]);
        let joint = DensityMatrix::pure(&cav.kronecker(&v), vec![2, 3, 3]).unwrap();
        let r1 = partial_trace(&joint, Subsystem::Mechanical(0)).unwrap();
        let want = diag_state(&[0.5, 0.5, 0.0]);
        assert!((r1.matrix() - want.matrix()).camax() < 1e-15);
        let r2 = partial_trace(&joint, Subsystem::Mechanical(1)).unwrap();
        assert!((r2.matrix() - want.matrix()).camax() < 1e-15);
        assert!(partial_trace(&joint, Subsystem::Mechanical(2)).is_err());
        let pf = projected_fidelity(&joint, &TargetSpec::bell(BellState::PhiPlus)).unwrap();
        assert!((pf - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wigner_at_origin() {
        let spec = WignerGridSpec {
            re_min: 0.0,
            re_max: 0.0,
            im_min: 0.0,
            im_max: 0.0,
            n_re: 1,
            n_im: 1,
        };
        let vac = diag_state(&[1.0, 0.0, 0.0]);
        let w = wigner(&vac, &spec).unwrap();
        assert!((w.values[(0, 0)] - FRAC_2_PI).abs() < 1e-12);
        let one = diag_state(&[0.0, 1.0, 0.0]);
        let w = wigner(&one, &spec).unwrap();
        assert!((w.values[(0, 0)] + FRAC_2_PI).abs() < 1e-12);
    }

    #[test]
    fn wigner_of_vacuum_is_gaussian() {
        let vac = diag_state(&[1.0, 0.0, 0.0, 0.0]);
        let spec = WignerGridSpec {
            n_re: 9,
            n_im: 9,
            re_min: -1.5,
            re_max: 1.5,
            im_min: -1.5,
            im_max: 1.5,
        };
        let w = wigner(&vac, &spec).unwrap();
        for (i, &x) in w.re.iter().enumerate() {
            for (j, &y) in w.im.iter().enumerate() {
                let want = FRAC_2_PI * (-2.0 * (x * x + y * y)).exp();
                assert!((w.values[(i, j)] - want).abs() < 1e-12, "({x},{y})");
            }
        }
    }

    #[test]
    fn wigner_of_one_phonon() {
        let one = diag_state(&[0.0, 1.0, 0.0]);
        let w = wigner(&one, &WignerGridSpec::default()).unwrap();
        for (i, &x) in w.re.iter().enumerate().step_by(7) {
            for (j, &y) in w.im.iter().enumerate().step_by(5) {
                let r2 = x * x + y * y;
                let want = FRAC_2_PI * (4.0 * r2 - 1.0) * (-2.0 * r2).exp();
                assert!((w.values[(i, j)] - want).abs() < 1e-12, "({x},{y})");
            }
        }
        assert!((w.integral() - 1.0).abs() < 0.01);
    }

    // W(η) = (2/π) Tr[D†(η) ρ D(η) P] with D from a large truncated exponential
    fn wigner_by_exponential(rho: &DensityMatrix, eta: Complex64) -> f64 {
        let d = 90;
        let n = rho.dim();
        let mut gen = DMatrix::from_element(d, d, C0);
        for k in 1..d {
            let s = (k as f64).sqrt();
            gen[(k, k - 1)] = eta * s;
            gen[(k - 1, k)] = -eta.conj() * s;
        }
        let disp = gen.exp();
        let mut big = DMatrix::from_element(d, d, C0);
        big.view_mut((0, 0), (n, n)).copy_from(rho.matrix());
        let moved = disp.adjoint() * big * disp;
        let parity: Complex64 = (0..d).map(|k| if k % 2 == 0 { moved[(k, k)] } else { -moved[(k, k)] }).sum();
        FRAC_2_PI * parity.re
    }

    #[test]
    fn wigner_matches_exponential_route() {
        let psi = DVector::from_vec(vec![c(0.5), Complex64::new(0.1, 0.4), c(-0.3), Complex64::new(0.0, 0.6), c(0.2)]);
        let rho = DensityMatrix::pure(&psi, vec![5]).unwrap();
        let spec = WignerGridSpec {
            re_min: -2.5,
            re_max: 2.0,
            im_min: -1.0,
            im_max: 2.5,
            n_re: 4,
            n_im: 3,
        };
        let w = wigner(&rho, &spec).unwrap();
        for (i, &x) in w.re.iter().enumerate() {
            for (j, &y) in w.im.iter().enumerate() {
                let want = wigner_by_exponential(&rho, Complex64::new(x, y));
                assert!((w.values[(i, j)] - want).abs() < 1e-9, "({x},{y})");
                assert!(w.values[(i, j)].abs() <= FRAC_2_PI + 1e-12);
            }
        }
    }

    #[test]
    fn fock_maps() {
        let m = fock_matrix_map(&diag_state(&[0.0, 0.0, 1.0]));
        assert_eq!(m.sum(), 1.0);
        assert_eq!(m[(2, 2)], 1.0);
        let t = TargetSpec::equal_superposition(&[0, 2]).unwrap();
        let rho = DensityMatrix::pure(&t.state_vector(&[3]).unwrap(), vec![3]).unwrap();
        let m = fock_matrix_map(&rho);
        for (i, j) in [(0, 0), (2, 2), (0, 2), (2, 0)] {
            assert!((m[(i, j)] - 0.5).abs() < 1e-15);
        }
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn partial_transpose_of_product() {
        let a = DensityMatrix::pure(&ket(&[0.6, 0.8]), vec![2]).unwrap();
        let psi = DVector::from_vec(vec![c(0.6), Complex64::new(0.0, 0.8)]);
        let b = DensityMatrix::pure(&psi, vec![2]).unwrap();
        let joint = kron(&a, &b);
        let pt = partial_transpose(&joint, 1).unwrap();
        let want = a.matrix().kronecker(&b.matrix().transpose());
        assert!((&pt - want).camax() < 1e-15);
        let again = partial_transpose(&DensityMatrix::from_matrix(pt.clone(), vec![2, 2]).unwrap(), 1).unwrap();
        assert_eq!(&again, joint.matrix());
        assert!((pt.adjoint() - &pt).camax() < 1e-15);
        assert!(partial_transpose(&joint, 2).is_err());
    }

    #[test]
    fn negativity_examples() {
        for which in [BellState::PhiPlus, BellState::PsiMinus] {
            let v = TargetSpec::bell(which).state_vector(&[3, 3]).unwrap();
            let rho = DensityMatrix::pure(&v, vec![3, 3]).unwrap();
            assert!((log_negativity(&rho).unwrap() - 1.0).abs() < 1e-10);
        }
        let a = diag_state(&[0.5, 0.5]);
        let b = DensityMatrix::pure(&ket(&[0.6, 0.8]), vec![2]).unwrap();
        assert!(log_negativity(&kron(&a, &b)).unwrap().abs() < 1e-12);
        assert!(log_negativity(&a).is_err());
    }

    #[test]
    fn csv_exports() {
        let dir = tempfile::tempdir().unwrap();
        let spec = WignerGridSpec {
            n_re: 3,
            n_im: 2,
            ..Default::default()
        };
        let grid = wigner(&diag_state(&[1.0, 0.0]), &spec).unwrap();
        let p = dir.path().join("w.csv");
        write_wigner_csv(&p, &grid).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "re_eta,im_eta,w");
        assert_eq!(text.lines().count(), 7);
        let p = dir.path().join("m.csv");
        write_matrix_map_csv(&p, &DMatrix::identity(2, 2)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 5);
    }
}
