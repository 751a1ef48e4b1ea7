// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

use approx::assert_abs_diff_eq;
use nalgebra::DVector;
use num_complex::Complex64;
use optomech_core::control::{devectorize_state, reward_from_fidelity, vectorize_state};
use optomech_core::diagnostics::log_negativity;
use optomech_core::dynamics::DensityMatrix;
use optomech_core::hilbert::displaced_fock_coeff;
use optomech_core::rl::replay::{pack_observation, unpack_observation};
use optomech_core::rl::{Activation, Mlp};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state(re: &[f64], im: &[f64]) -> DVector<Complex64> {
    let v = DVector::from_iterator(re.len(), re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)));
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}

fn amplitudes(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-1.0f64..1.0, n),
        prop::collection::vec(-1.0f64..1.0, n),
    )
        .prop_filter("non-zero", |(re, im)| re.iter().chain(im).any(|x| x.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficient_transpose_symmetry(n in 0usize..15, s in 0usize..15, beta in 0.0f64..2.5) {
        let sign = if (n + s) % 2 == 0 { 1.0 } else { -1.0 };
        let a = displaced_fock_coeff(1, n, s, beta);
        let b = displaced_fock_coeff(1, s, n, beta);
        prop_assert!((a - sign * b).abs() < 1e-12, "{a} vs {sign}·{b}");
    }

    #[test]
    fn coefficient_rows_are_normalized(s in 0usize..6, beta in 0.0f64..1.5) {
        let total: f64 = (0..80).map(|n| displaced_fock_coeff(1, n, s, beta).powi(2)).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn soft_update_is_convex(seed in 0u64..1000, tau in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Mlp<f64> = Mlp::<f64>::new(&[4, 6, 2], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let b: Mlp<f64> = Mlp::<f64>::new(&[4, 6, 2], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let mut mixed = a.clone();
        mixed.soft_update_from(&b, tau);
        for ((m, x), y) in mixed.layers().iter().zip(a.layers()).zip(b.layers()) {
            for ((&vm, &vx), &vy) in m.weight.iter().zip(&x.weight).zip(&y.weight) {
                prop_assert!((vm - (tau * vy + (1.0 - tau) * vx)).abs() < 1e-12);
                prop_assert!(vm >= vx.min(vy) - 1e-12 && vm <= vx.max(vy) + 1e-12);
            }
            for ((&vm, &vx), &vy) in m.bias.iter().zip(&x.bias).zip(&y.bias) {
                prop_assert!((vm - (tau * vy + (1.0 - tau) * vx)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reward_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(reward_from_fidelity(lo) <= reward_from_fidelity(hi));
        prop_assert!(reward_from_fidelity(hi).is_finite());
    }

    #[test]
    fn product_states_have_zero_log_negativity((r1, i1) in amplitudes(3), (r2, i2) in amplitudes(4)) {
        let psi = state(&r1, &i1).kronecker(&state(&r2, &i2));
        let rho = DensityMatrix::pure(&psi, vec![3, 4]).unwrap();
        prop_assert!(log_negativity(&rho).unwrap().abs() < 1e-10);
    }

    #[test]
    fn observation_round_trip((re, im) in amplitudes(5)) {
        let rho = DensityMatrix::pure(&state(&re, &im), vec![5]).unwrap();
        let obs = vectorize_state(&rho);
        prop_assert_eq!(obs.len(), 50);
        let back = devectorize_state(&obs, vec![5]).unwrap();
        prop_assert!((back.matrix() - rho.matrix()).norm() < 1e-12);

        let packed = pack_observation(&obs).unwrap();
        let mut full = vec![0.0f32; obs.len()];
        unpack_observation(&packed, 5, &mut full);
        for (&x, &y) in obs.iter().zip(&full) {
            prop_assert!((x - y as f64).abs() < 1e-6);
        }
    }
}

#[test]
fn pure_density_matrices_are_physical() {
    let psi = state(&[0.3, -0.2, 0.9], &[0.1, 0.4, 0.0]);
    let rho = DensityMatrix::pure(&psi, vec![3]).unwrap();
    assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-12);
    assert!(rho.trace_error() < 1e-12);
    assert!(rho.min_eigenvalue() > -1e-12);
}
