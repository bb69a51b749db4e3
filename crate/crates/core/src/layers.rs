//! Network primitives with hand-written backward passes.
//!
//! Conventions: a dense layer stores weights as `(in_dim, out_dim)` row-major
//! and computes `f(Wᵀv + b)`. A conv layer stores kernels as
//! `(filters, kernel_len)` and always applies ReLU. Feature maps are
//! `(maps, len)` row-major. ReLU backward masks on the *output* (`y > 0`),
//! which is equivalent to masking on the pre-activation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{glorot_init, glorot_tensor, Rng, Tensor};

/// Probability floor applied before taking a log.
pub const LOG_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softmax,
    Identity,
}

/// Parameter and input gradients of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Tensor,
    pub bias: Tensor,
    pub input: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

impl Conv1dLayer {
    /// Glorot-initialized kernels (fan-in `kernel`, fan-out `kernel * filters`), zero biases.
    pub fn init(rng: &mut Rng, filters: usize, kernel: usize, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("conv stride must be at least 1"));
        }
        Ok(Conv1dLayer {
            weights: glorot_tensor(rng, &[filters, kernel], kernel, kernel * filters)?,
            bias: Tensor::zeros(&[filters])?,
            stride,
        })
    }

    pub fn filters(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape()[1]
    }

    /// Valid-convolution output length.
    pub fn output_len(&self, input_len: usize) -> Result<usize> {
        let k = self.kernel();
        if input_len < k {
            return Err(Error::DimMismatch {
                context: "conv1d input shorter than kernel",
                expected: k,
                found: input_len,
            });
        }
        Ok((input_len - k) / self.stride + 1)
    }

    /// `out[j][t] = relu(b[j] + Σ_k w[j][k] · x[t·stride + k])`, shape `(filters, len)`.
    pub fn forward(&self, x: &[f64]) -> Result<Tensor> {
        let len = self.output_len(x.len())?;
        let mut out = vec![0.0; self.filters() * len];
        self.forward_into(x, &mut out);
        Tensor::from_vec(&[self.filters(), len], out)
            .map_err(|_| Error::NonFinite("conv1d output"))
    }

    pub(crate) fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        let (k, s) = (self.kernel(), self.stride);
        let len = out.len() / self.filters();
        let w = self.weights.data();
        let b = self.bias.data();
        for (j, row) in out.chunks_exact_mut(len).enumerate() {
            let kern = &w[j * k..(j + 1) * k];
            for (t, o) in row.iter_mut().enumerate() {
                let window = &x[t * s..t * s + k];
                let mut z = b[j];
                for (&wk, &xv) in kern.iter().zip(window) {
                    z += wk * xv;
                }
                *o = z.max(0.0);
            }
        }
    }

    /// Gradients given the forward input, forward output, and `∂L/∂out`.
    pub fn backward(&self, x: &[f64], out: &Tensor, upstream: &Tensor) -> Result<LayerGrads> {
        let len = self.output_len(x.len())?;
        let expected = [self.filters(), len];
        for t in [out, upstream] {
            if t.shape() != expected {
                return Err(Error::DimMismatch {
                    context: "conv1d backward maps",
                    expected: expected[0] * expected[1],
                    found: t.len(),
                });
            }
        }
        let mut gw = self.weights.zeros_like();
        let mut gb = self.bias.zeros_like();
        let mut gx = vec![0.0; x.len()];
        self.backward_into(
            x,
            out.data(),
            upstream.data(),
            gw.data_mut(),
            gb.data_mut(),
            Some(&mut gx),
        );
        Ok(LayerGrads {
            weights: gw,
            bias: gb,
            input: gx,
        })
    }

    /// Accumulates (`+=`) parameter gradients, and input gradient when requested.
    pub(crate) fn backward_into(
        &self,
        x: &[f64],
        out: &[f64],
        upstream: &[f64],
        gw: &mut [f64],
        gb: &mut [f64],
        mut gx: Option<&mut [f64]>,
    ) {
        let (k, s) = (self.kernel(), self.stride);
        let len = out.len() / self.filters();
        let w = self.weights.data();
        for j in 0..self.filters() {
            let gkern = &mut gw[j * k..(j + 1) * k];
            let kern = &w[j * k..(j + 1) * k];
            for t in 0..len {
                let idx = j * len + t;
                if out[idx] <= 0.0 {
                    continue;
                }
                let g = upstream[idx];
                if g == 0.0 {
                    continue;
                }
                gb[j] += g;
                let window = &x[t * s..t * s + k];
                for (gk, &xv) in gkern.iter_mut().zip(window) {
                    *gk += g * xv;
                }
                if let Some(gx) = gx.as_deref_mut() {
                    for (gxv, &wk) in gx[t * s..t * s + k].iter_mut().zip(kern) {
                        *gxv += g * wk;
                    }
                }
            }
        }
    }
}

/// Non-overlapping-capable 1D max pooling applied independently to each map.
/// Returns the pooled maps and, for every output, the flat input index of its
/// maximum (earliest index on ties). Trailing elements that do not fill a
/// window are dropped.
pub fn maxpool1d(x: &Tensor, width: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    if x.shape().len() != 2 {
        return Err(Error::invalid("maxpool1d expects (maps, len) input"));
    }
    let (maps, len) = (x.shape()[0], x.shape()[1]);
    let out_len = pool_len(len, width, stride)?;
    let mut out = vec![0.0; maps * out_len];
    let mut idx = vec![0usize; maps * out_len];
    maxpool_into(x.data(), maps, len, width, stride, &mut out, &mut idx);
    Ok((Tensor::from_vec(&[maps, out_len], out)?, idx))
}

pub fn pool_len(len: usize, width: usize, stride: usize) -> Result<usize> {
    if width == 0 || stride == 0 {
        return Err(Error::invalid("pool width and stride must be at least 1"));
    }
    if len < width {
        return Err(Error::DimMismatch {
            context: "maxpool input shorter than window",
            expected: width,
            found: len,
        });
    }
    Ok((len - width) / stride + 1)
}

pub(crate) fn maxpool_into(
    x: &[f64],
    maps: usize,
    len: usize,
    width: usize,
    stride: usize,
    out: &mut [f64],
    idx: &mut [usize],
) {
    let out_len = out.len() / maps;
    for m in 0..maps {
        for t in 0..out_len {
            let start = m * len + t * stride;
            let mut best = start;
            for i in start + 1..start + width {
                if x[i] > x[best] {
                    best = i;
                }
            }
            out[m * out_len + t] = x[best];
            idx[m * out_len + t] = best;
        }
    }
}

/// Routes each pooled gradient back to its argmax position.
pub fn maxpool1d_backward(input_shape: &[usize], indices: &[usize], upstream: &Tensor) -> Result<Tensor> {
    if indices.len() != upstream.len() {
        return Err(Error::DimMismatch {
            context: "maxpool backward indices",
            expected: upstream.len(),
            found: indices.len(),
        });
    }
    let mut g = Tensor::zeros(input_shape)?;
    let gd = g.data_mut();
    for (&i, &u) in indices.iter().zip(upstream.data()) {
        if i >= gd.len() {
            return Err(Error::invalid("maxpool index outside the input"));
        }
        gd[i] += u;
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    /// Glorot-initialized weights, zero biases.
    pub fn init(rng: &mut Rng, in_dim: usize, out_dim: usize, activation: Activation) -> Result<Self> {
        Ok(DenseLayer {
            weights: glorot_init(rng, in_dim, out_dim)?,
            bias: Tensor::zeros(&[out_dim])?,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.in_dim() {
            return Err(Error::DimMismatch {
                context: "dense input",
                expected: self.in_dim(),
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.out_dim()];
        self.forward_into(v, &mut out);
        if !out.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("dense output"));
        }
        Ok(out)
    }

    pub(crate) fn forward_into(&self, v: &[f64], out: &mut [f64]) {
        self.affine_into(v, out);
        match self.activation {
            Activation::Relu => out.iter_mut().for_each(|o| *o = o.max(0.0)),
            Activation::Softmax => softmax_in_place(out),
            Activation::Identity => {}
        }
    }

    /// `Wᵀv + b` without the activation.
    pub(crate) fn affine_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.out_dim();
        out.copy_from_slice(self.bias.data());
        for (row, &vi) in self.weights.data().chunks_exact(n).zip(v) {
            if vi == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += vi * w;
            }
        }
    }

    /// Gradients given the forward input `v`, forward output `out`, and `∂L/∂out`.
    pub fn backward(&self, v: &[f64], out: &[f64], upstream: &[f64]) -> Result<LayerGrads> {
        let (i, o) = (self.in_dim(), self.out_dim());
        if v.len() != i {
            return Err(Error::DimMismatch {
                context: "dense backward input",
                expected: i,
                found: v.len(),
            });
        }
        if out.len() != o || upstream.len() != o {
            return Err(Error::DimMismatch {
                context: "dense backward output",
                expected: o,
                found: if out.len() != o { out.len() } else { upstream.len() },
            });
        }
        let pre = self.activation_backward(out, upstream);
        let mut gw = self.weights.zeros_like();
        let mut gb = self.bias.zeros_like();
        let mut gx = vec![0.0; i];
        self.affine_backward_into(v, &pre, gw.data_mut(), gb.data_mut(), Some(&mut gx));
        Ok(LayerGrads {
            weights: gw,
            bias: gb,
            input: gx,
        })
    }

    /// `∂L/∂z` from `∂L/∂out` for `out = f(z)`.
    pub(crate) fn activation_backward(&self, out: &[f64], upstream: &[f64]) -> Vec<f64> {
        match self.activation {
            Activation::Relu => out
                .iter()
                .zip(upstream)
                .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
                .collect(),
            Activation::Softmax => {
                let dot: f64 = out.iter().zip(upstream).map(|(p, g)| p * g).sum();
                out.iter().zip(upstream).map(|(&p, &g)| p * (g - dot)).collect()
            }
            Activation::Identity => upstream.to_vec(),
        }
    }

    /// Accumulates gradients of `z = Wᵀv + b` given `∂L/∂z`.
    pub(crate) fn affine_backward_into(
        &self,
        v: &[f64],
        gz: &[f64],
        gw: &mut [f64],
        gb: &mut [f64],
        gx: Option<&mut [f64]>,
    ) {
        let n = self.out_dim();
        for (b, &g) in gb.iter_mut().zip(gz) {
            *b += g;
        }
        for (grow, &vi) in gw.chunks_exact_mut(n).zip(v) {
            if vi == 0.0 {
                continue;
            }
            for (gwv, &g) in grow.iter_mut().zip(gz) {
                *gwv += vi * g;
            }
        }
        if let Some(gx) = gx {
            for (gxv, row) in gx.iter_mut().zip(self.weights.data().chunks_exact(n)) {
                *gxv += row.iter().zip(gz).map(|(w, g)| w * g).sum::<f64>();
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub keep_prob: f64,
    pub mode: Mode,
}

/// Inverted dropout. Returns the output and the per-element scale that was
/// applied (0 or `1/keep_prob` in training, 1 otherwise). Inference mode and
/// `keep_prob == 1` are the identity and draw nothing from `rng`.
pub fn dropout(spec: &DropoutSpec, rng: &mut Rng, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(spec.keep_prob > 0.0 && spec.keep_prob <= 1.0) {
        return Err(Error::invalid("dropout keep probability must lie in (0, 1]"));
    }
    if spec.mode == Mode::Inference || spec.keep_prob == 1.0 {
        return Ok((v.to_vec(), vec![1.0; v.len()]));
    }
    let scale = 1.0 / spec.keep_prob;
    let mask: Vec<f64> = v
        .iter()
        .map(|_| if rng.uniform() < spec.keep_prob { scale } else { 0.0 })
        .collect();
    let out = v.iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((out, mask))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Gradient with respect to the softmax *logits*: `probs - onehot(target)`.
    pub logit_grad: Vec<f64>,
    /// The target probability was below [`LOG_EPSILON`] and got clamped.
    pub clamped: bool,
}

/// `-ln probs[target]` for a 0-based class index.
pub fn cross_entropy(probs: &[f64], target: usize) -> Result<CrossEntropy> {
    if target >= probs.len() {
        return Err(Error::DimMismatch {
            context: "cross-entropy target",
            expected: probs.len(),
            found: target,
        });
    }
    let p = probs[target];
    let clamped = p < LOG_EPSILON;
    if clamped {
        log::warn!("cross-entropy: target probability {p:e} clamped to {LOG_EPSILON:e}");
    }
    let loss = -libm::log(p.max(LOG_EPSILON));
    let mut logit_grad = probs.to_vec();
    logit_grad[target] -= 1.0;
    Ok(CrossEntropy {
        loss,
        logit_grad,
        clamped,
    })
}
