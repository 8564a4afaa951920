//! Layers with cached forward state and exact reverse-mode gradients.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{col_sum_acc, matmul, matmul_nt, matmul_tn_acc, Tensor};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng;

/// Forward-pass behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, dropout on, relaxed Gumbel samples.
    Train,
    /// Running statistics, no dropout, noiseless softmax heads. Deterministic.
    Eval,
    /// Running statistics, no dropout, hard one-hot Gumbel samples.
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T = f32> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.rows, value.cols);
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

fn uniform<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Tensor<T> {
    let data = (0..rows * cols).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
    Tensor { rows, cols, data }
}

/// Fully connected layer; the weight is stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T = f32> {
    pub w: Param<T>,
    pub b: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    /// Uniform(±1/√in) initialization for weight and bias.
    pub fn new<R: Rng + ?Sized>(inp: usize, out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(inp.max(1) as f64);
        Self {
            w: Param::new(uniform(inp, out, bound, rng)),
            b: Param::new(uniform(1, out, bound, rng)),
            input: None,
        }
    }

    pub fn from_params(w: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        if b.shape() != [1, w.cols] {
            return Err(Error::Shape(format!("bias {:?} for weight {:?}", b.shape(), w.shape())));
        }
        Ok(Self { w: Param::new(w), b: Param::new(b), input: None })
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.rows
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.cols
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.cols != self.in_dim() {
            return Err(Error::Shape(format!("dense layer expects {} inputs, got {}", self.in_dim(), x.cols)));
        }
        let y = matmul(x, &self.w.value, Some(&self.b.value));
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or(Error::BackwardBeforeForward)?;
        matmul_tn_acc(x, g, &mut self.w.grad);
        col_sum_acc(g, &mut self.b.grad);
        Ok(matmul_nt(g, &self.w.value))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T = f32> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<(Tensor<T>, Vec<T>)>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::filled(1, dim, T::one())),
            beta: Param::new(Tensor::zeros(1, dim)),
            running_mean: Tensor::zeros(1, dim),
            running_var: Tensor::filled(1, dim, T::one()),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.cols
    }

    /// Normalized activations before the affine step, as cached by the last
    /// forward pass.
    pub fn normalized(&self) -> Option<&Tensor<T>> {
        self.cache.as_ref().map(|c| &c.0)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let d = self.dim();
        if x.cols != d {
            return Err(Error::Shape(format!("batch norm over {d} features, got {}", x.cols)));
        }
        let n = x.rows;
        let eps = T::from_f64(self.eps);
        let (mean, var) = if mode == Mode::Train {
            if n == 0 {
                return Err(Error::EmptyInput("batch norm batch"));
            }
            let nf = T::from_usize(n);
            let mut mean = vec![T::zero(); d];
            for i in 0..n {
                for (m, &v) in mean.iter_mut().zip(x.row(i)) {
                    *m = *m + v;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / nf);
            let mut var = vec![T::zero(); d];
            for i in 0..n {
                for ((s, &v), &m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                    *s = *s + (v - m) * (v - m);
                }
            }
            let mom = T::from_f64(self.momentum);
            let unbias = if n > 1 { nf / T::from_usize(n - 1) } else { T::one() };
            for j in 0..d {
                var[j] = var[j] / nf;
                self.running_mean.data[j] = (T::one() - mom) * self.running_mean.data[j] + mom * mean[j];
                self.running_var.data[j] = (T::one() - mom) * self.running_var.data[j] + mom * var[j] * unbias;
            }
            (mean, var)
        } else {
            (self.running_mean.data.clone(), self.running_var.data.clone())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(n, d);
        let mut y = Tensor::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                let h = (x.get(i, j) - mean[j]) * inv_std[j];
                xhat.set(i, j, h);
                y.set(i, j, self.gamma.value.data[j] * h + self.beta.value.data[j]);
            }
        }
        self.cache = Some((xhat, if mode == Mode::Train { inv_std } else { Vec::new() }));
        Ok(y)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let (xhat, inv_std) = self.cache.as_ref().ok_or(Error::BackwardBeforeForward)?;
        let (n, d) = (g.rows, g.cols);
        let mut dx = Tensor::zeros(n, d);
        for j in 0..d {
            let gamma = self.gamma.value.data[j];
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for i in 0..n {
                sum_g = sum_g + g.get(i, j);
                sum_gx = sum_gx + g.get(i, j) * xhat.get(i, j);
            }
            self.gamma.grad.data[j] = self.gamma.grad.data[j] + sum_gx;
            self.beta.grad.data[j] = self.beta.grad.data[j] + sum_g;
            if inv_std.is_empty() {
                // Running statistics are constants.
                let s = gamma / (self.running_var.data[j] + T::from_f64(self.eps)).sqrt();
                for i in 0..n {
                    dx.set(i, j, g.get(i, j) * s);
                }
            } else {
                let nf = T::from_usize(n);
                let k = gamma * inv_std[j] / nf;
                for i in 0..n {
                    let v = nf * g.get(i, j) - sum_g - xhat.get(i, j) * sum_gx;
                    dx.set(i, j, k * v);
                }
            }
        }
        Ok(dx)
    }
}

/// Output nonlinearity applied to one span of a head layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadAct {
    Identity,
    Tanh,
    Softmax,
    Gumbel { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadSpan {
    pub start: usize,
    pub width: usize,
    pub act: HeadAct,
}

/// Per-span output activations. Spans must tile the input exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Heads<T = f32> {
    pub spans: Vec<HeadSpan>,
    pub width: usize,
    /// Soft outputs of the last forward pass (the relaxed sample for
    /// Gumbel spans, even when the returned value was hardened).
    soft: Option<Tensor<T>>,
}

pub(crate) fn softmax_in_place<T: Real>(v: &mut [T]) {
    let top = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - top).exp();
        sum = sum + *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

pub(crate) fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl<T: Real> Heads<T> {
    pub fn new(spans: Vec<HeadSpan>) -> Result<Self> {
        let mut at = 0;
        for s in &spans {
            if s.start != at || s.width == 0 {
                return Err(Error::Shape(format!("head spans do not tile the output at {at}")));
            }
            if let HeadAct::Gumbel { tau } = s.act {
                if !(tau > 0.0) {
                    return Err(Error::InvalidArgument(format!("gumbel temperature {tau}")));
                }
            }
            at += s.width;
        }
        Ok(Self { spans, width: at, soft: None })
    }

    pub fn forward<R: Rng + ?Sized>(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Tensor<T>> {
        if x.cols != self.width {
            return Err(Error::Shape(format!("heads expect {} inputs, got {}", self.width, x.cols)));
        }
        let mut soft = x.clone();
        let mut out = x.clone();
        for i in 0..x.rows {
            let srow = soft.row_mut(i);
            for s in &self.spans {
                let v = &mut srow[s.start..s.start + s.width];
                match s.act {
                    HeadAct::Identity => {}
                    HeadAct::Tanh => v.iter_mut().for_each(|a| *a = a.tanh()),
                    HeadAct::Softmax => softmax_in_place(v),
                    HeadAct::Gumbel { tau } => {
                        let inv_tau = T::from_f64(1.0 / tau);
                        for a in v.iter_mut() {
                            let g = if mode == Mode::Eval { T::zero() } else { T::from_f64(gumbel_noise(rng)) };
                            *a = (*a + g) * inv_tau;
                        }
                        softmax_in_place(v);
                    }
                }
            }
            let orow = out.row_mut(i);
            orow.copy_from_slice(soft.row(i));
            if mode == Mode::Sample {
                for s in self.spans.iter().filter(|s| matches!(s.act, HeadAct::Gumbel { .. })) {
                    let v = &mut orow[s.start..s.start + s.width];
                    let k = argmax(v);
                    v.iter_mut().for_each(|a| *a = T::zero());
                    v[k] = T::one();
                }
            }
        }
        self.soft = Some(soft);
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.soft.as_ref().ok_or(Error::BackwardBeforeForward)?;
        let mut dx = g.clone();
        for i in 0..g.rows {
            let yr = y.row(i);
            let dr = dx.row_mut(i);
            for s in &self.spans {
                let r = s.start..s.start + s.width;
                match s.act {
                    HeadAct::Identity => {}
                    HeadAct::Tanh => {
                        for k in r {
                            dr[k] = dr[k] * (T::one() - yr[k] * yr[k]);
                        }
                    }
                    HeadAct::Softmax | HeadAct::Gumbel { .. } => {
                        let scale = match s.act {
                            HeadAct::Gumbel { tau } => T::from_f64(1.0 / tau),
                            _ => T::one(),
                        };
                        let inner: T = r.clone().map(|k| dr[k] * yr[k]).sum();
                        for k in r {
                            dr[k] = scale * yr[k] * (dr[k] - inner);
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -libm::log(-libm::log(rng::open01(rng)))
}

/// Gumbel-softmax sample of one logit vector.
pub fn gumbel_softmax<T: Real, R: Rng + ?Sized>(logits: &[T], tau: f64, rng: &mut R, hard: bool) -> Result<Vec<T>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("gumbel temperature {tau}")));
    }
    let mut v: Vec<T> = logits.iter().map(|&l| (l + T::from_f64(gumbel_noise(rng))) / T::from_f64(tau)).collect();
    softmax_in_place(&mut v);
    if hard {
        let k = argmax(&v);
        v.iter_mut().for_each(|a| *a = T::zero());
        v[k] = T::one();
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    Dense(Dense<T>),
    Relu { mask: Option<Vec<bool>> },
    LeakyRelu { slope: f64, mask: Option<Vec<bool>> },
    Tanh { out: Option<Tensor<T>> },
    BatchNorm(BatchNorm<T>),
    Dropout { p: f64, scale: Option<Vec<T>> },
    /// `x ↦ x ⊕ inner(x)`
    ConcatSkip(Box<Net<T>>),
    Heads(Heads<T>),
}

impl<T: Real> Layer<T> {
    pub fn relu() -> Self {
        Layer::Relu { mask: None }
    }

    pub fn leaky_relu(slope: f64) -> Self {
        Layer::LeakyRelu { slope, mask: None }
    }

    pub fn tanh() -> Self {
        Layer::Tanh { out: None }
    }

    pub fn dropout(p: f64) -> Self {
        Layer::Dropout { p, scale: None }
    }

    fn forward<R: Rng + ?Sized>(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::Relu { mask } => {
                *mask = Some(x.data.iter().map(|&v| v > T::zero()).collect());
                Ok(x.map(|v| if v > T::zero() { v } else { T::zero() }))
            }
            Layer::LeakyRelu { slope, mask } => {
                let s = T::from_f64(*slope);
                *mask = Some(x.data.iter().map(|&v| v > T::zero()).collect());
                Ok(x.map(|v| if v > T::zero() { v } else { v * s }))
            }
            Layer::Tanh { out } => {
                let y = x.map(|v| v.tanh());
                *out = Some(y.clone());
                Ok(y)
            }
            Layer::BatchNorm(bn) => bn.forward(x, mode),
            Layer::Dropout { p, scale } => {
                if mode != Mode::Train || *p == 0.0 {
                    *scale = None;
                    return Ok(x.clone());
                }
                let keep = T::from_f64(1.0 / (1.0 - *p));
                let s: Vec<T> = (0..x.data.len()).map(|_| if rng.gen::<f64>() < *p { T::zero() } else { keep }).collect();
                let y = Tensor { rows: x.rows, cols: x.cols, data: x.data.iter().zip(&s).map(|(&a, &b)| a * b).collect() };
                *scale = Some(s);
                Ok(y)
            }
            Layer::ConcatSkip(inner) => {
                let h = inner.forward(x, mode, rng)?;
                Tensor::hcat(&[x, &h])
            }
            Layer::Heads(h) => h.forward(x, mode, rng),
        }
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(d) => d.backward(g),
            Layer::Relu { mask } => {
                let m = mask.as_ref().ok_or(Error::BackwardBeforeForward)?;
                Ok(Tensor { rows: g.rows, cols: g.cols, data: g.data.iter().zip(m).map(|(&v, &on)| if on { v } else { T::zero() }).collect() })
            }
            Layer::LeakyRelu { slope, mask } => {
                let m = mask.as_ref().ok_or(Error::BackwardBeforeForward)?;
                let s = T::from_f64(*slope);
                Ok(Tensor { rows: g.rows, cols: g.cols, data: g.data.iter().zip(m).map(|(&v, &on)| if on { v } else { v * s }).collect() })
            }
            Layer::Tanh { out } => {
                let y = out.as_ref().ok_or(Error::BackwardBeforeForward)?;
                Ok(Tensor { rows: g.rows, cols: g.cols, data: g.data.iter().zip(&y.data).map(|(&v, &t)| v * (T::one() - t * t)).collect() })
            }
            Layer::BatchNorm(bn) => bn.backward(g),
            Layer::Dropout { scale, .. } => match scale {
                Some(s) => Ok(Tensor { rows: g.rows, cols: g.cols, data: g.data.iter().zip(s.iter()).map(|(&v, &k)| v * k).collect() }),
                None => Ok(g.clone()),
            },
            Layer::ConcatSkip(inner) => {
                let w = g.cols - inner.out_dim();
                let mut gx = g.slice_cols(0, w);
                let gh = g.slice_cols(w, g.cols - w);
                gx.add_assign(&inner.backward(&gh)?);
                Ok(gx)
            }
            Layer::Heads(h) => h.backward(g),
        }
    }

    pub fn out_dim(&self, inp: usize) -> usize {
        match self {
            Layer::Dense(d) => d.out_dim(),
            Layer::ConcatSkip(inner) => inner.out_dim() + inp,
            _ => inp,
        }
    }
}

/// A sequential network.
#[derive(Debug, Clone, PartialEq)]
pub struct Net<T = f32> {
    pub layers: Vec<Layer<T>>,
    pub in_dim: usize,
    forwarded: bool,
}

impl<T: Real> Net<T> {
    pub fn new(in_dim: usize, layers: Vec<Layer<T>>) -> Self {
        Self { layers, in_dim, forwarded: false }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.iter().fold(self.in_dim, |d, l| l.out_dim(d))
    }

    pub fn forward<R: Rng + ?Sized>(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Tensor<T>> {
        if x.cols != self.in_dim {
            return Err(Error::Shape(format!("network expects {} inputs, got {}", self.in_dim, x.cols)));
        }
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode, rng)?;
        }
        h.ensure_finite("network forward")?;
        self.forwarded = true;
        Ok(h)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        if !self.forwarded {
            return Err(Error::BackwardBeforeForward);
        }
        let mut g = g.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Visits every trainable parameter with a stable dotted name
    /// (`"3.w"`, `"0.1.b"`, ...).
    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    f(&format!("{prefix}{i}.w"), &mut d.w);
                    f(&format!("{prefix}{i}.b"), &mut d.b);
                }
                Layer::BatchNorm(bn) => {
                    f(&format!("{prefix}{i}.gamma"), &mut bn.gamma);
                    f(&format!("{prefix}{i}.beta"), &mut bn.beta);
                }
                Layer::ConcatSkip(inner) => inner.visit_params(&format!("{prefix}{i}."), f),
                _ => {}
            }
        }
    }

    /// Visits non-trainable state (batch-norm running statistics).
    pub fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::BatchNorm(bn) => {
                    f(&format!("{prefix}{i}.running_mean"), &mut bn.running_mean);
                    f(&format!("{prefix}{i}.running_var"), &mut bn.running_var);
                }
                Layer::ConcatSkip(inner) => inner.visit_buffers(&format!("{prefix}{i}."), f),
                _ => {}
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_params("", &mut |_, p| p.zero_grad());
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, p| n += p.value.data.len());
        n
    }

    /// Gradient penalty support: after a forward pass in any mode, computes
    /// `G = ∂(Σ outputs)/∂x` for every row, asks `upstream` for `∂P/∂G`
    /// and accumulates `∂P/∂θ` into the parameter gradients. Only valid for
    /// networks made of dense layers, (leaky) ReLU and dropout, where `G`
    /// is a product of weights and fixed diagonal masks.
    pub fn input_gradient_backprop(&mut self, upstream: impl FnOnce(&Tensor<T>) -> Result<Tensor<T>>) -> Result<Tensor<T>> {
        if !self.forwarded {
            return Err(Error::BackwardBeforeForward);
        }
        let rows = match self.layers.iter().find_map(|l| match l {
            Layer::Dense(d) => d.input.as_ref().map(|x| x.rows),
            _ => None,
        }) {
            Some(r) => r,
            None => return Err(Error::BackwardBeforeForward),
        };
        // Reverse sweep: u ← u·Wᵀ through dense layers, u ← u⊙mask elsewhere.
        let mut u = Tensor::filled(rows, self.out_dim(), T::one());
        let mut saved: Vec<Option<Tensor<T>>> = vec![None; self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            u = match layer {
                Layer::Dense(d) => {
                    let next = matmul_nt(&u, &d.w.value);
                    saved[i] = Some(u);
                    next
                }
                Layer::Relu { .. } | Layer::LeakyRelu { .. } | Layer::Dropout { .. } => {
                    let mut copy = layer.clone();
                    copy.backward(&u)?
                }
                _ => return Err(Error::InvalidArgument("input-gradient backprop needs a piecewise-linear network".into())),
            };
        }
        let grad_input = u;
        // Forward sweep of the adjoint.
        let mut adj = upstream(&grad_input)?;
        if adj.shape() != grad_input.shape() {
            return Err(Error::Shape("upstream gradient shape".into()));
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            adj = match layer {
                Layer::Dense(d) => {
                    let ui = saved[i].as_ref().unwrap();
                    // v = u·Wᵀ  ⇒  ∂P/∂W[k,o] = Σ_b adj[b,k]·u[b,o],  ∂P/∂u = adj·W
                    matmul_tn_acc(&adj, ui, &mut d.w.grad);
                    matmul(&adj, &d.w.value, None)
                }
                other => {
                    let mut copy = other.clone();
                    copy.backward(&adj)?
                }
            };
        }
        Ok(grad_input)
    }
}

/// Builds `[Dense, act]*` hidden stacks followed by a final dense layer.
pub fn mlp<T: Real, R: Rng + ?Sized>(
    inp: usize,
    hidden: &[usize],
    out: usize,
    act: impl Fn() -> Vec<Layer<T>>,
    rng: &mut R,
) -> Net<T> {
    let mut layers = Vec::new();
    let mut d = inp;
    for &h in hidden {
        layers.push(Layer::Dense(Dense::new(d, h, rng)));
        layers.extend(act());
        d = h;
    }
    layers.push(Layer::Dense(Dense::new(d, out, rng)));
    Net::new(inp, layers)
}

/// Names of the parameters of `net`, in visiting order.
pub fn param_names<T: Real>(net: &mut Net<T>, prefix: &str) -> Vec<String> {
    let mut names = Vec::new();
    net.visit_params(prefix, &mut |n, _| names.push(String::from(n)));
    names
}

#[cfg(test)]
#[path = "layers_tests.rs"]
mod tests;
