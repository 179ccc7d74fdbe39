//! Minimal double-precision network pieces over a flat parameter vector:
//! dense and strided 3×3 convolution layers, ReLU, the shared-weight pair
//! encoder used by both learned modules, and Adam.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{NavError, Result};

/// Hands out consecutive parameter ranges.
#[derive(Debug, Default, Clone, Copy)]
pub struct Layout {
    len: usize,
}

impl Layout {
    pub fn new() -> Self {
        Layout { len: 0 }
    }

    fn take(&mut self, n: usize) -> usize {
        let off = self.len;
        self.len += n;
        off
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// `y = W x + b`, `W` row-major `[n_out][n_in]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    w: usize,
    b: usize,
}

impl Dense {
    pub fn new(layout: &mut Layout, n_in: usize, n_out: usize) -> Self {
        let w = layout.take(n_in * n_out);
        let b = layout.take(n_out);
        Dense { n_in, n_out, w, b }
    }

    /// He-normal weights scaled by `gain`, zero biases.
    pub fn init<R: Rng>(&self, theta: &mut [f64], gain: f64, rng: &mut R) {
        let normal = Normal::new(0.0, gain * (2.0 / self.n_in as f64).sqrt()).expect("positive std");
        for w in &mut theta[self.w..self.w + self.n_in * self.n_out] {
            *w = normal.sample(rng);
        }
        theta[self.b..self.b + self.n_out].fill(0.0);
    }

    pub fn bias_mut<'a>(&self, theta: &'a mut [f64]) -> &'a mut [f64] {
        &mut theta[self.b..self.b + self.n_out]
    }

    pub fn forward(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_in);
        let w = &theta[self.w..self.w + self.n_in * self.n_out];
        let b = &theta[self.b..self.b + self.n_out];
        (0..self.n_out)
            .map(|o| {
                let row = &w[o * self.n_in..(o + 1) * self.n_in];
                b[o] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients into `grad`; returns `dL/dx`.
    pub fn backward(&self, theta: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let w = &theta[self.w..self.w + self.n_in * self.n_out];
        let mut dx = vec![0.0; self.n_in];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[self.b + o] += g;
            let gw = &mut grad[self.w + o * self.n_in..self.w + (o + 1) * self.n_in];
            for (gwi, xi) in gw.iter_mut().zip(x) {
                *gwi += g * xi;
            }
            let row = &w[o * self.n_in..(o + 1) * self.n_in];
            for (dxi, wi) in dx.iter_mut().zip(row) {
                *dxi += g * wi;
            }
        }
        dx
    }
}

/// 3×3 convolution, stride 2, zero padding 1, channel-major tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_size: usize,
    pub out_size: usize,
    w: usize,
    b: usize,
}

const K: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;

impl Conv2d {
    pub fn new(layout: &mut Layout, in_ch: usize, out_ch: usize, in_size: usize) -> Self {
        let w = layout.take(out_ch * in_ch * K * K);
        let b = layout.take(out_ch);
        let out_size = (in_size + 2 * PAD - K) / STRIDE + 1;
        Conv2d { in_ch, out_ch, in_size, out_size, w, b }
    }

    pub fn out_len(&self) -> usize {
        self.out_ch * self.out_size * self.out_size
    }

    pub fn init<R: Rng>(&self, theta: &mut [f64], rng: &mut R) {
        let fan_in = (self.in_ch * K * K) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        for w in &mut theta[self.w..self.w + self.out_ch * self.in_ch * K * K] {
            *w = normal.sample(rng);
        }
        theta[self.b..self.b + self.out_ch].fill(0.0);
    }

    /// Input index feeding output `(oy, ox)` through tap `(ky, kx)`.
    fn tap(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * STRIDE + ky).checked_sub(PAD)?;
        let ix = (ox * STRIDE + kx).checked_sub(PAD)?;
        (iy < self.in_size && ix < self.in_size).then_some((iy, ix))
    }

    pub fn forward(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let (n, m) = (self.in_size, self.out_size);
        let mut y = vec![0.0; self.out_len()];
        for o in 0..self.out_ch {
            let bias = theta[self.b + o];
            for oy in 0..m {
                for ox in 0..m {
                    let mut acc = bias;
                    for c in 0..self.in_ch {
                        let wbase = self.w + ((o * self.in_ch + c) * K * K);
                        for ky in 0..K {
                            for kx in 0..K {
                                if let Some((iy, ix)) = self.tap(oy, ox, ky, kx) {
                                    acc += theta[wbase + ky * K + kx] * x[c * n * n + iy * n + ix];
                                }
                            }
                        }
                    }
                    y[o * m * m + oy * m + ox] = acc;
                }
            }
        }
        y
    }

    pub fn backward(&self, theta: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let (n, m) = (self.in_size, self.out_size);
        let mut dx = vec![0.0; x.len()];
        for o in 0..self.out_ch {
            for oy in 0..m {
                for ox in 0..m {
                    let g = dy[o * m * m + oy * m + ox];
                    if g == 0.0 {
                        continue;
                    }
                    grad[self.b + o] += g;
                    for c in 0..self.in_ch {
                        let wbase = self.w + ((o * self.in_ch + c) * K * K);
                        for ky in 0..K {
                            for kx in 0..K {
                                if let Some((iy, ix)) = self.tap(oy, ox, ky, kx) {
                                    let xi = c * n * n + iy * n + ix;
                                    grad[wbase + ky * K + kx] += g * x[xi];
                                    dx[xi] += g * theta[wbase + ky * K + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

pub fn relu(mut v: Vec<f64>) -> Vec<f64> {
    for x in &mut v {
        *x = x.max(0.0);
    }
    v
}

/// Masks `dy` by the ReLU output `y`.
pub fn relu_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(&yi, &g)| if yi > 0.0 { g } else { 0.0 }).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(NavError::Numerical(format!("non-finite activation in {what}")))
    }
}

/// Two-layer ReLU stream applied with shared weights to (current, goal),
/// followed by a ReLU fusion layer over the concatenated embeddings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEncoder {
    pub l1: Dense,
    pub l2: Dense,
    pub fusion: Dense,
}

#[derive(Debug, Clone)]
pub struct StreamCache {
    x: Vec<f64>,
    h1: Vec<f64>,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PairCache {
    pub current: StreamCache,
    pub goal: StreamCache,
    cat: Vec<f64>,
    pub fused: Vec<f64>,
}

impl PairEncoder {
    pub fn new(layout: &mut Layout, input: usize, hidden: usize, fused: usize) -> Self {
        PairEncoder {
            l1: Dense::new(layout, input, hidden),
            l2: Dense::new(layout, hidden, hidden),
            fusion: Dense::new(layout, 2 * hidden, fused),
        }
    }

    pub fn init<R: Rng>(&self, theta: &mut [f64], rng: &mut R) {
        self.l1.init(theta, 1.0, rng);
        self.l2.init(theta, 1.0, rng);
        self.fusion.init(theta, 1.0, rng);
    }

    pub fn stream(&self, theta: &[f64], x: &[f64]) -> StreamCache {
        let h1 = relu(self.l1.forward(theta, x));
        let embedding = relu(self.l2.forward(theta, &h1));
        StreamCache { x: x.to_vec(), h1, embedding }
    }

    fn stream_backward(&self, theta: &[f64], c: &StreamCache, d_emb: &[f64], grad: &mut [f64]) {
        let d2 = relu_backward(&c.embedding, d_emb);
        let d_h1 = self.l2.backward(theta, &c.h1, &d2, grad);
        let d1 = relu_backward(&c.h1, &d_h1);
        self.l1.backward(theta, &c.x, &d1, grad);
    }

    pub fn forward(&self, theta: &[f64], current: &[f64], goal: &[f64]) -> PairCache {
        let current = self.stream(theta, current);
        let goal = self.stream(theta, goal);
        let cat: Vec<f64> = current.embedding.iter().chain(&goal.embedding).copied().collect();
        let fused = relu(self.fusion.forward(theta, &cat));
        PairCache { current, goal, cat, fused }
    }

    pub fn backward(&self, theta: &[f64], c: &PairCache, d_fused: &[f64], grad: &mut [f64]) {
        let d_pre = relu_backward(&c.fused, d_fused);
        let d_cat = self.fusion.backward(theta, &c.cat, &d_pre, grad);
        let h = self.l2.n_out;
        self.stream_backward(theta, &c.current, &d_cat[..h], grad);
        self.stream_backward(theta, &c.goal, &d_cat[h..], grad);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64, eps: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    /// Descends along `grad` with bias-corrected moments.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over the listed parameter indices. Shared by gradient tests.
pub fn finite_difference_error(
    theta: &[f64],
    analytic: &[f64],
    indices: &[usize],
    eps: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut p = theta.to_vec();
    let mut worst: f64 = 0.0;
    for &i in indices {
        let orig = p[i];
        p[i] = orig + eps;
        let up = loss(&p);
        p[i] = orig - eps;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let scale = numeric.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max((numeric - analytic[i]).abs() / scale);
    }
    worst
}
