// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Coordinate-list complex operators acting on column-major dense buffers.
//!
//! Ladder operators on the truncated joint space have O(D) nonzeros, so the
//! master-equation right-hand side is dominated by sparse-dense products.

use nalgebra::DMatrix;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    dim: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseOp {
    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != ZERO {
                    entries.push((i, j, v));
                }
            }
        }
        SparseOp {
            dim: m.nrows(),
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// `out += coeff * (self * x)`.
    pub fn mul_acc(&self, coeff: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        for &(i, k, v) in &self.entries {
            let c = coeff * v;
            for j in 0..d {
                out[i + d * j] += c * x[k + d * j];
            }
        }
    }

    /// `out += coeff * (x * self^†)`.
    pub fn mul_adjoint_right_acc(&self, coeff: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        // (x L†)[:, j] = sum_k x[:, k] conj(L[j, k])
        for &(j, k, v) in &self.entries {
            let c = coeff * v.conj();
            let (src, dst) = (k * d, j * d);
            for i in 0..d {
                out[dst + i] += c * x[src + i];
            }
        }
    }

    /// `out += coeff * self * x * self^†`, using `scratch` (length d²) as workspace.
    pub fn sandwich_acc(
        &self,
        coeff: Complex64,
        x: &[Complex64],
        scratch: &mut [Complex64],
        out: &mut [Complex64],
    ) {
        scratch.fill(ZERO);
        self.mul_acc(Complex64::new(1.0, 0.0), x, scratch);
        self.mul_adjoint_right_acc(coeff, scratch, out);
    }
}
