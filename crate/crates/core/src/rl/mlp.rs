// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Fully connected networks with manual backpropagation and Adam.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, NdFloat, Zip};
use num_traits::NumCast;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
fn cst<F: NdFloat>(x: f64) -> F {
    <F as NumCast>::from(x).expect("representable constant")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply<F: NdFloat>(self, x: &mut Array2<F>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => x.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() }),
            Activation::Tanh => x.mapv_inplace(|v| v.tanh()),
        }
    }

    /// Multiplies `grad` by the derivative, expressed through the layer output.
    fn backprop<F: NdFloat>(self, out: &Array2<F>, grad: &mut Array2<F>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => Zip::from(grad).and(out).for_each(|g, &o| {
                if o <= F::zero() {
                    *g = F::zero();
                }
            }),
            Activation::Tanh => Zip::from(grad).and(out).for_each(|g, &o| *g *= F::one() - o * o),
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Affine layer `y = act(x W + b)` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    layers: Vec<Dense<F>>,
}

/// Layer inputs recorded by [`Mlp::forward_tape`]; entry `k + 1` is the
/// output of layer `k`.
#[derive(Debug, Clone)]
pub struct Tape<F> {
    values: Vec<Array2<F>>,
}

impl<F: NdFloat> Tape<F> {
    pub fn output(&self) -> &Array2<F> {
        self.values.last().expect("tape holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub weight: Vec<Array2<F>>,
    pub bias: Vec<Array1<F>>,
}

impl<F: NdFloat> Gradients<F> {
    pub fn zeros_like(net: &Mlp<F>) -> Self {
        Gradients {
            weight: net.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            bias: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }
}

impl<F: NdFloat> Mlp<F> {
    /// Random network. Hidden layers use `U(±1/√fan_in)` for weights and
    /// biases; the output layer uses `U(±3e-3)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        check_sizes(sizes)?;
        let n = sizes.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for k in 0..n {
            let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
            let bound = if k + 1 == n { 3e-3 } else { 1.0 / (fan_in as f64).sqrt() };
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || cst(dist.sample(rng)));
            let bias = Array1::from_shape_simple_fn(fan_out, || cst(dist.sample(rng)));
            layers.push(Dense {
                weight,
                bias,
                activation: if k + 1 == n { output } else { hidden },
            });
        }
        Ok(Mlp { layers })
    }

    /// Network with every parameter set to zero.
    pub fn zeroed(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        check_sizes(sizes)?;
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| Dense {
                weight: Array2::zeros((sizes[k], sizes[k + 1])),
                bias: Array1::zeros(sizes[k + 1]),
                activation: if k + 1 == n { output } else { hidden },
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Dense<F>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("layers", "network needs at least one layer"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.ncols() {
                return Err(Error::shape(format!("bias of length {}", l.weight.ncols()), l.bias.len()));
            }
            if k > 0 && layers[k - 1].weight.ncols() != l.weight.nrows() {
                return Err(Error::shape(
                    format!("{} inputs to layer {k}", layers[k - 1].weight.ncols()),
                    l.weight.nrows(),
                ));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Dense<F>] {
        &self.layers
    }

    /// `[in, hidden.., out]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weight.ncols()))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<F>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(format!("{} input features", self.input_dim()), x.ncols()));
        }
        Ok(())
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for l in &self.layers {
            h = self.affine(l, &h);
        }
        Ok(h)
    }

    fn affine(&self, l: &Dense<F>, x: &Array2<F>) -> Array2<F> {
        let mut y = x.dot(&l.weight);
        y += &l.bias;
        l.activation.apply(&mut y);
        y
    }

    /// Forward pass that keeps every layer's input for [`Mlp::backward`].
    pub fn forward_tape(&self, x: Array2<F>) -> Result<Tape<F>> {
        self.check_input(&x.view())?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x);
        for l in &self.layers {
            let y = self.affine(l, values.last().expect("non-empty"));
            values.push(y);
        }
        Ok(Tape { values })
    }

    /// Backpropagates `grad_out = ∂L/∂output`. Returns parameter gradients
    /// when `param_grads` is set, and `∂L/∂x[:, cols]` when `input_cols` is
    /// given.
    pub fn backward(
        &self,
        tape: &Tape<F>,
        grad_out: &Array2<F>,
        param_grads: bool,
        input_cols: Option<Range<usize>>,
    ) -> (Option<Gradients<F>>, Option<Array2<F>>) {
        self.backward_impl(tape, grad_out, false, param_grads, input_cols)
    }

    /// Like [`Mlp::backward`], but `grad_pre` is taken with respect to the
    /// output layer's pre-activation.
    pub fn backward_preactivation(
        &self,
        tape: &Tape<F>,
        grad_pre: &Array2<F>,
        param_grads: bool,
        input_cols: Option<Range<usize>>,
    ) -> (Option<Gradients<F>>, Option<Array2<F>>) {
        self.backward_impl(tape, grad_pre, true, param_grads, input_cols)
    }

    /// Output layer pre-activation `h W + b` recomputed from a tape.
    pub fn output_preactivation(&self, tape: &Tape<F>) -> Array2<F> {
        let n = self.layers.len();
        let l = &self.layers[n - 1];
        tape.values[n - 1].dot(&l.weight) + &l.bias
    }

    fn backward_impl(
        &self,
        tape: &Tape<F>,
        grad_out: &Array2<F>,
        skip_last: bool,
        param_grads: bool,
        input_cols: Option<Range<usize>>,
    ) -> (Option<Gradients<F>>, Option<Array2<F>>) {
        let n = self.layers.len();
        let mut grads = param_grads.then(|| Gradients::zeros_like(self));
        let mut g = grad_out.clone();
        let mut input_grad = None;
        for k in (0..n).rev() {
            let l = &self.layers[k];
            if !(skip_last && k == n - 1) {
                l.activation.backprop(&tape.values[k + 1], &mut g);
            }
            if let Some(gr) = grads.as_mut() {
                gr.weight[k] = tape.values[k].t().dot(&g);
                gr.bias[k] = g.sum_axis(Axis(0));
            }
            if k > 0 {
                g = g.dot(&l.weight.t());
            } else if let Some(cols) = input_cols.clone() {
                input_grad = Some(g.dot(&l.weight.slice(s![cols, ..]).t()));
            }
        }
        (grads, input_grad)
    }

    /// `θ ← τ θ_src + (1 − τ) θ` for every parameter.
    pub fn soft_update_from(&mut self, src: &Mlp<F>, tau: F) {
        let keep = F::one() - tau;
        for (dst, s) in self.layers.iter_mut().zip(&src.layers) {
            Zip::from(&mut dst.weight).and(&s.weight).for_each(|d, &v| *d = tau * v + keep * *d);
            Zip::from(&mut dst.bias).and(&s.bias).for_each(|d, &v| *d = tau * v + keep * *d);
        }
    }

    /// Same network in another float type.
    pub fn cast<G: NdFloat>(&self) -> Mlp<G> {
        let conv = |v: &F| <G as NumCast>::from(*v).expect("finite parameter");
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.map(conv),
                    bias: l.bias.map(conv),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    /// Mutable access for tests and checkpoint loading.
    pub fn layers_mut(&mut self) -> &mut [Dense<F>] {
        &mut self.layers
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::param("layer_sizes", format!("need >= 2 positive sizes, got {sizes:?}")));
    }
    Ok(())
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    t: i32,
    m: Gradients<F>,
    v: Gradients<F>,
}

impl<F: NdFloat> Adam<F> {
    pub fn new(net: &Mlp<F>, lr: f64) -> Self {
        Adam {
            lr: cst(lr),
            beta1: cst(0.9),
            beta2: cst(0.999),
            eps: cst(1e-8),
            t: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One descent step along `grads`.
    pub fn step(&mut self, net: &mut Mlp<F>, grads: &Gradients<F>) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = F::one() - b1.powi(self.t);
        let c2 = F::one() - b2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        let eps_hat = self.eps * c2.sqrt();
        let one = F::one();
        for (k, layer) in net.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.weight)
                .and(&mut self.m.weight[k])
                .and(&mut self.v.weight[k])
                .and(&grads.weight[k])
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    *p -= step * *m / (v.sqrt() + eps_hat);
                });
            Zip::from(&mut layer.bias)
                .and(&mut self.m.bias[k])
                .and(&mut self.v.bias[k])
                .and(&grads.bias[k])
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    *p -= step * *m / (v.sqrt() + eps_hat);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(sizes: &[usize], out: Activation, seed: u64) -> Mlp<f64> {
        Mlp::new(sizes, Activation::Tanh, out, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn shapes_and_counts() {
        let m = net(&[5, 7, 3], Activation::Identity, 0);
        assert_eq!(m.sizes(), vec![5, 7, 3]);
        assert_eq!(m.num_params(), 5 * 7 + 7 + 7 * 3 + 3);
        assert!(m.forward(Array2::zeros((2, 4)).view()).is_err());
        assert_eq!(m.forward(Array2::zeros((2, 5)).view()).unwrap().dim(), (2, 3));
        assert!(Mlp::<f64>::zeroed(&[3], Activation::Relu, Activation::Tanh).is_err());
    }

    #[test]
    fn known_forward() {
        let l = Dense {
            weight: array![[1.0, -1.0], [2.0, 0.5]],
            bias: array![0.5, -3.0],
            activation: Activation::Relu,
        };
        let m = Mlp::from_layers(vec![l]).unwrap();
        let y = m.forward(array![[1.0, 1.0]].view()).unwrap();
        assert_eq!(y, array![[3.5, 0.0]]);
    }

    fn loss(m: &Mlp<f64>, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
        (m.forward(x.view()).unwrap() * w).sum()
    }

    #[test]
    fn parameter_and_input_gradients_match_differences() {
        let mut m = net(&[4, 6, 5, 2], Activation::Tanh, 3);
        // widen the output layer so its gradients are not tiny
        m.layers_mut()[2].weight.mapv_inplace(|v| v * 200.0);
        let x = array![[0.3, -0.2, 0.8, 0.1], [-0.5, 0.4, 0.05, 0.9]];
        let w = array![[1.0, -0.5], [0.25, 2.0]];
        let tape = m.forward_tape(x.clone()).unwrap();
        let (g, gx) = m.backward(&tape, &w, true, Some(1..3));
        let g = g.unwrap();
        let gx = gx.unwrap();
        let h = 1e-6;
        for k in 0..3 {
            for (idx, &an) in g.weight[k].indexed_iter() {
                let mut p = m.clone();
                p.layers_mut()[k].weight[idx] += h;
                let mut q = m.clone();
                q.layers_mut()[k].weight[idx] -= h;
                let fd = (loss(&p, &x, &w) - loss(&q, &x, &w)) / (2.0 * h);
                assert!((fd - an).abs() < 1e-7 * (1.0 + fd.abs()), "layer {k} {idx:?}: {fd} vs {an}");
            }
        }
        for r in 0..2 {
            for c in 1..3 {
                let mut xp = x.clone();
                xp[(r, c)] += h;
                let mut xm = x.clone();
                xm[(r, c)] -= h;
                let fd = (loss(&m, &xp, &w) - loss(&m, &xm, &w)) / (2.0 * h);
                assert!((fd - gx[(r, c - 1)]).abs() < 1e-7 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn preactivation_gradient_matches_differences() {
        let m = net(&[3, 5, 2], Activation::Tanh, 4);
        let x = array![[0.3, -0.2, 0.8], [-0.5, 0.4, 0.05]];
        let w = array![[1.0, -0.5], [0.25, 2.0]];
        let pre = |m: &Mlp<f64>| (m.output_preactivation(&m.forward_tape(x.clone()).unwrap()) * &w).sum();
        let tape = m.forward_tape(x.clone()).unwrap();
        let u = m.output_preactivation(&tape);
        assert!(Zip::from(&u).and(tape.output()).all(|&u, &y| (u.tanh() - y).abs() < 1e-14));
        let (g, _) = m.backward_preactivation(&tape, &w, true, None);
        let g = g.unwrap();
        let h = 1e-6;
        for k in 0..2 {
            for (idx, &an) in g.weight[k].indexed_iter() {
                let mut p = m.clone();
                p.layers_mut()[k].weight[idx] += h;
                let mut q = m.clone();
                q.layers_mut()[k].weight[idx] -= h;
                let fd = (pre(&p) - pre(&q)) / (2.0 * h);
                assert!((fd - an).abs() < 1e-7 * (1.0 + fd.abs()), "layer {k} {idx:?}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn soft_update_extremes() {
        let src = net(&[3, 4, 2], Activation::Tanh, 1);
        let orig = net(&[3, 4, 2], Activation::Tanh, 2);
        let mut t = orig.clone();
        t.soft_update_from(&src, 0.0);
        assert_eq!(t, orig);
        t.soft_update_from(&src, 1.0);
        assert_eq!(t, src);
    }

    #[test]
    fn adam_reduces_quadratic_loss() {
        let mut m = Mlp::from_layers(vec![Dense {
            weight: array![[2.0], [-1.0]],
            bias: array![0.5],
            activation: Activation::Identity,
        }])
        .unwrap();
        let mut opt = Adam::new(&m, 0.05);
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let y = array![[0.0], [0.0], [0.0]];
        let loss = |m: &Mlp<f64>| (m.forward(x.view()).unwrap() - &y).mapv(|v| v * v).sum();
        let start = loss(&m);
        for _ in 0..200 {
            let tape = m.forward_tape(x.clone()).unwrap();
            let grad = (tape.output() - &y) * 2.0;
            let (g, _) = m.backward(&tape, &grad, true, None);
            opt.step(&mut m, &g.unwrap());
        }
        assert!(loss(&m) < 1e-3 * start);
        assert_eq!(opt.steps(), 200);
    }

    #[test]
    fn cast_round_trip() {
        let m = net(&[3, 4, 2], Activation::Tanh, 5).cast::<f32>();
        let back: Mlp<f32> = m.cast::<f64>().cast::<f32>();
        assert_eq!(m, back);
        assert_eq!(Activation::from_tag(Activation::Tanh.tag()), Some(Activation::Tanh));
        assert_eq!(Activation::from_tag(9), None);
    }
}
