//! Fully connected perceptron with batch normalization and rectifiers after
//! every hidden layer, and an affine output head.
//!
//! All trainable parameters live in one flat buffer so the optimizer can treat
//! them uniformly. Matrices are row-major; a weight matrix is stored
//! `fan_out × fan_in`.

use std::ops::Range;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scalar::{gemm, Op, Real};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics and update the running estimates.
    Train,
    /// Normalize with the running estimates.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
struct Slots {
    fan_in: usize,
    fan_out: usize,
    w: Range<usize>,
    b: Range<usize>,
    /// `(gamma, beta)` for hidden layers.
    bn: Option<(Range<usize>, Range<usize>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Real> {
    widths: Vec<usize>,
    slots: Vec<Slots>,
    params: Vec<T>,
    running_mean: Vec<Vec<T>>,
    running_var: Vec<Vec<T>>,
}

/// Activations retained by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    rows: usize,
    /// Input to every layer, including the head.
    inputs: Vec<Vec<T>>,
    xhat: Vec<Vec<T>>,
    inv_std: Vec<Vec<T>>,
    /// Post-normalization, pre-rectifier values.
    pre_relu: Vec<Vec<T>>,
    pub output: Vec<T>,
}

fn layout(widths: &[usize]) -> (Vec<Slots>, usize) {
    let mut slots = Vec::new();
    let mut at = 0;
    let layers = widths.len() - 1;
    for l in 0..layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let w = at..at + fan_in * fan_out;
        at = w.end;
        let b = at..at + fan_out;
        at = b.end;
        let bn = if l + 1 < layers {
            let g = at..at + fan_out;
            let be = g.end..g.end + fan_out;
            at = be.end;
            Some((g, be))
        } else {
            None
        };
        slots.push(Slots {
            fan_in,
            fan_out,
            w,
            b,
            bn,
        });
    }
    (slots, at)
}

impl<T: Real> Mlp<T> {
    /// Widths are `[input, hidden..., output]`; at least one hidden layer.
    /// Weights and biases start uniform in `±1/sqrt(fan_in)`, `gamma = 1`, `beta = 0`.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &net.slots {
            let bound = 1.0 / (s.fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for v in &mut net.params[s.w.clone()] {
                *v = T::from_f64(dist.sample(&mut rng));
            }
            for v in &mut net.params[s.b.clone()] {
                *v = T::from_f64(dist.sample(&mut rng));
            }
            if let Some((g, _)) = &s.bn {
                net.params[g.clone()].fill(T::one());
            }
        }
        Ok(net)
    }

    /// All parameters zero, running mean 0, running variance 1.
    pub fn zeroed(widths: &[usize]) -> Result<Self> {
        if widths.len() < 3 || widths.contains(&0) {
            return Err(Error::Config(format!(
                "network needs input, >= 1 hidden and output widths, all positive; got {widths:?}"
            )));
        }
        let (slots, total) = layout(widths);
        let hidden = &widths[1..widths.len() - 1];
        Ok(Self {
            widths: widths.to_vec(),
            slots,
            params: vec![T::zero(); total],
            running_mean: hidden.iter().map(|&w| vec![T::zero(); w]).collect(),
            running_var: hidden.iter().map(|&w| vec![T::one(); w]).collect(),
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn running_mean(&self) -> &[Vec<T>] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[Vec<T>] {
        &self.running_var
    }

    pub(crate) fn set_running_stats(&mut self, mean: Vec<Vec<T>>, var: Vec<Vec<T>>) -> Result<()> {
        let ok = mean.len() == self.running_mean.len()
            && var.len() == self.running_var.len()
            && mean.iter().zip(&self.running_mean).all(|(a, b)| a.len() == b.len())
            && var.iter().zip(&self.running_var).all(|(a, b)| a.len() == b.len());
        if !ok {
            return Err(Error::Format("running statistics do not match layer widths".into()));
        }
        if var.iter().flatten().any(|v| !(*v >= T::zero())) {
            return Err(Error::Format("negative running variance".into()));
        }
        self.running_mean = mean;
        self.running_var = var;
        Ok(())
    }

    /// Number of hidden layers (each followed by normalization and a rectifier).
    pub fn hidden_layers(&self) -> usize {
        self.slots.len() - 1
    }

    /// Weight matrix of layer `l` (`fan_out × fan_in`, row-major).
    pub fn weight(&self, l: usize) -> &[T] {
        &self.params[self.slots[l].w.clone()]
    }

    pub fn bias(&self, l: usize) -> &[T] {
        &self.params[self.slots[l].b.clone()]
    }

    pub fn gamma(&self, l: usize) -> &[T] {
        let (g, _) = self.slots[l].bn.as_ref().expect("hidden layer");
        &self.params[g.clone()]
    }

    pub fn beta(&self, l: usize) -> &[T] {
        let (_, b) = self.slots[l].bn.as_ref().expect("hidden layer");
        &self.params[b.clone()]
    }

    fn affine(&self, l: usize, input: &[T], rows: usize) -> Vec<T> {
        let s = &self.slots[l];
        let bias = &self.params[s.b.clone()];
        let mut z: Vec<T> = bias.iter().copied().cycle().take(rows * s.fan_out).collect();
        gemm(Op::NT, rows, s.fan_in, s.fan_out, input, &self.params[s.w.clone()], T::one(), &mut z);
        z
    }

    fn check_input(&self, input: &[T], rows: usize) -> Result<()> {
        if input.len() != rows * self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} values, expected {rows} rows of {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Inference with running statistics. Returns `rows × output_dim` values.
    pub fn infer(&self, input: &[T], rows: usize) -> Result<Vec<T>> {
        self.check_input(input, rows)?;
        let eps = T::from_f64(BN_EPS);
        let mut a = input.to_vec();
        for l in 0..self.hidden_layers() {
            let mut z = self.affine(l, &a, rows);
            let width = self.slots[l].fan_out;
            let (gamma, beta) = (self.gamma(l), self.beta(l));
            for row in z.chunks_exact_mut(width) {
                for j in 0..width {
                    let xhat = (row[j] - self.running_mean[l][j]) / (self.running_var[l][j] + eps).sqrt();
                    row[j] = (gamma[j] * xhat + beta[j]).max(T::zero());
                }
            }
            a = z;
        }
        Ok(self.affine(self.hidden_layers(), &a, rows))
    }

    /// Forward pass in either mode. Training mode needs at least two rows.
    pub fn forward(&mut self, input: &[T], rows: usize, mode: Mode) -> Result<Vec<T>> {
        match mode {
            Mode::Infer => self.infer(input, rows),
            Mode::Train => Ok(self.forward_train(input, rows)?.output),
        }
    }

    /// Training-mode forward pass: batch statistics, running-statistic update, cache for backprop.
    pub fn forward_train(&mut self, input: &[T], rows: usize) -> Result<ForwardCache<T>> {
        self.check_input(input, rows)?;
        if rows < 2 {
            return Err(Error::Data("training-mode batch normalization needs at least 2 rows".into()));
        }
        let eps = T::from_f64(BN_EPS);
        let momentum = T::from_f64(BN_MOMENTUM);
        let rows_t = T::from_f64(rows as f64);
        let unbias = T::from_f64(rows as f64 / (rows as f64 - 1.0));

        let mut cache = ForwardCache {
            rows,
            inputs: Vec::new(),
            xhat: Vec::new(),
            inv_std: Vec::new(),
            pre_relu: Vec::new(),
            output: Vec::new(),
        };
        let mut a = input.to_vec();
        for l in 0..self.hidden_layers() {
            let width = self.slots[l].fan_out;
            let z = self.affine(l, &a, rows);
            let mut mean = vec![T::zero(); width];
            for row in z.chunks_exact(width) {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m = *m + v;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / rows_t);
            let mut var = vec![T::zero(); width];
            for row in z.chunks_exact(width) {
                for j in 0..width {
                    let d = row[j] - mean[j];
                    var[j] = var[j] + d * d;
                }
            }
            var.iter_mut().for_each(|v| *v = *v / rows_t);
            let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

            let (gamma, beta) = (self.gamma(l).to_vec(), self.beta(l).to_vec());
            let mut xhat = z;
            let mut pre = vec![T::zero(); rows * width];
            let mut out = vec![T::zero(); rows * width];
            for r in 0..rows {
                for j in 0..width {
                    let k = r * width + j;
                    xhat[k] = (xhat[k] - mean[j]) * inv_std[j];
                    pre[k] = gamma[j] * xhat[k] + beta[j];
                    out[k] = pre[k].max(T::zero());
                }
            }
            for j in 0..width {
                let rm = &mut self.running_mean[l][j];
                *rm = (T::one() - momentum) * *rm + momentum * mean[j];
                let rv = &mut self.running_var[l][j];
                *rv = (T::one() - momentum) * *rv + momentum * var[j] * unbias;
            }
            cache.inputs.push(std::mem::replace(&mut a, out));
            cache.xhat.push(xhat);
            cache.inv_std.push(inv_std);
            cache.pre_relu.push(pre);
        }
        cache.output = self.affine(self.hidden_layers(), &a, rows);
        cache.inputs.push(a);
        Ok(cache)
    }

    /// Gradients of `(1/rows) Σ ‖output − target‖²` with respect to every parameter,
    /// given the cache of a training-mode pass on the same batch. Returns `(loss, grads)`.
    pub fn backward(&self, cache: &ForwardCache<T>, targets: &[T]) -> Result<(f64, Vec<T>)> {
        let rows = cache.rows;
        let out_dim = self.output_dim();
        if targets.len() != rows * out_dim {
            return Err(Error::Dimension(format!(
                "targets have {} values, expected {}",
                targets.len(),
                rows * out_dim
            )));
        }
        let mut loss = 0.0f64;
        let scale = T::from_f64(2.0 / rows as f64);
        let mut delta: Vec<T> = cache
            .output
            .iter()
            .zip(targets)
            .map(|(&o, &t)| {
                let d = o - t;
                loss += d.as_f64() * d.as_f64();
                d * scale
            })
            .collect();
        loss /= rows as f64;
        if !loss.is_finite() {
            return Err(Error::TrainingDivergence(format!("loss is {loss}")));
        }

        let mut grads = vec![T::zero(); self.params.len()];
        let rows_t = T::from_f64(rows as f64);
        for l in (0..self.slots.len()).rev() {
            let s = &self.slots[l];
            let input = &cache.inputs[l];
            if l < self.hidden_layers() {
                // `delta` arrives as dL/d(rectifier output); turn it into dL/dz.
                let width = s.fan_out;
                let (g_range, b_range) = s.bn.clone().expect("hidden layer");
                let gamma = self.gamma(l);
                let xhat = &cache.xhat[l];
                let pre = &cache.pre_relu[l];
                let mut dgamma = vec![T::zero(); width];
                let mut dbeta = vec![T::zero(); width];
                for ((drow, xrow), prow) in delta
                    .chunks_exact_mut(width)
                    .zip(xhat.chunks_exact(width))
                    .zip(pre.chunks_exact(width))
                {
                    for ((((d, &x), &p), dg), db) in drow.iter_mut().zip(xrow).zip(prow).zip(&mut dgamma).zip(&mut dbeta) {
                        if p <= T::zero() {
                            *d = T::zero();
                        }
                        *dg = *dg + *d * x;
                        *db = *db + *d;
                    }
                }
                // Σ_r dx̂ = γ·dβ and Σ_r dx̂·x̂ = γ·dγ, per unit.
                let sum_dxhat: Vec<T> = gamma.iter().zip(&dbeta).map(|(&g, &b)| g * b).collect();
                let sum_dxhat_xhat: Vec<T> = gamma.iter().zip(&dgamma).map(|(&g, &d)| g * d).collect();
                let scale: Vec<T> = cache.inv_std[l].iter().map(|&v| v / rows_t).collect();
                for (drow, xrow) in delta.chunks_exact_mut(width).zip(xhat.chunks_exact(width)) {
                    for (((((d, &x), &g), &sc), &s1), &s2) in drow
                        .iter_mut()
                        .zip(xrow)
                        .zip(gamma)
                        .zip(&scale)
                        .zip(&sum_dxhat)
                        .zip(&sum_dxhat_xhat)
                    {
                        *d = sc * (rows_t * *d * g - s1 - x * s2);
                    }
                }
                grads[g_range].copy_from_slice(&dgamma);
                grads[b_range].copy_from_slice(&dbeta);
            }
            gemm(Op::TN, s.fan_out, rows, s.fan_in, &delta, input, T::zero(), &mut grads[s.w.clone()]);
            for row in delta.chunks_exact(s.fan_out) {
                for (g, &d) in grads[s.b.clone()].iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
            if l > 0 {
                let mut prev = vec![T::zero(); rows * s.fan_in];
                gemm(Op::NN, rows, s.fan_out, s.fan_in, &delta, &self.params[s.w.clone()], T::zero(), &mut prev);
                delta = prev;
            }
        }
        Ok((loss, grads))
    }

    /// Converts to another scalar type (rounding when narrowing).
    pub fn cast<U: Real>(&self) -> Mlp<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.as_f64())).collect::<Vec<U>>();
        Mlp {
            widths: self.widths.clone(),
            slots: self.slots.clone(),
            params: conv(&self.params),
            running_mean: self.running_mean.iter().map(|v| conv(v)).collect(),
            running_var: self.running_var.iter().map(|v| conv(v)).collect(),
        }
    }
}

/// Inference-only network with batch normalization folded into the affine maps.
///
/// One input row at a time; this is what runs inside the closed loop.
#[derive(Debug, Clone)]
pub struct FoldedMlp {
    layers: Vec<(usize, usize, Vec<f32>, Vec<f32>)>,
}

impl FoldedMlp {
    pub fn from_mlp<T: Real>(net: &Mlp<T>) -> Self {
        let mut layers = Vec::new();
        for l in 0..net.slots.len() {
            let s = &net.slots[l];
            let mut w: Vec<f64> = net.weight(l).iter().map(|v| v.as_f64()).collect();
            let mut b: Vec<f64> = net.bias(l).iter().map(|v| v.as_f64()).collect();
            if l < net.hidden_layers() {
                for j in 0..s.fan_out {
                    let scale = net.gamma(l)[j].as_f64() / (net.running_var[l][j].as_f64() + BN_EPS).sqrt();
                    for v in &mut w[j * s.fan_in..(j + 1) * s.fan_in] {
                        *v *= scale;
                    }
                    b[j] = (b[j] - net.running_mean[l][j].as_f64()) * scale + net.beta(l)[j].as_f64();
                }
            }
            layers.push((
                s.fan_in,
                s.fan_out,
                w.into_iter().map(|v| v as f32).collect(),
                b.into_iter().map(|v| v as f32).collect(),
            ));
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].0
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").1
    }

    pub fn eval(&self, input: &[f64]) -> Vec<f64> {
        let mut a: Vec<f32> = input.iter().map(|&v| v as f32).collect();
        let last = self.layers.len() - 1;
        for (l, (fan_in, fan_out, w, b)) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(*fan_out);
            for j in 0..*fan_out {
                let v = b[j] + dot(&w[j * fan_in..(j + 1) * fan_in], &a);
                out.push(if l < last { v.max(0.0) } else { v });
            }
            a = out;
        }
        a.into_iter().map(f64::from).collect()
    }
}

/// Dot product with eight independent accumulators so it vectorizes.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s: f32 = acc.iter().sum();
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}
