//! The dual-branch classifier and its single-branch baseline.
//!
//! ```text
//! spectrum ─ conv1d(20×10, ReLU) ─ maxpool(2/2) ─ flatten ─ dense(100, ReLU) ─ dropout ─ O1 ┐
//!                                                                                            (+) ─ dense(K, softmax) ─ P
//! coords ─── dense(256, ReLU) ─ dense(100, ReLU) ─────────────────────────────────────── O2 ┘
//! ```
//!
//! The baseline drops the coordinate branch, so the head sees `O1` alone.
//! Class ids are 1-based at this API; 0 is reserved for unlabeled pixels.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layers::{
    cross_entropy, dropout, maxpool_into, pool_len, Activation, Conv1dLayer, DenseLayer,
    DropoutSpec, Mode,
};
use crate::numerics::{Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub num_bands: usize,
    pub num_classes: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pool_width: usize,
    pub pool_stride: usize,
    /// Width of both branch outputs (they are summed).
    pub dense_width: usize,
    pub coord_hidden: usize,
    /// Dropout keep probability on the spectral branch's dense output.
    pub keep_prob: f64,
    /// Single-branch 1D-CNN: no coordinate branch, no fusion.
    pub baseline: bool,
}

impl ModelConfig {
    pub fn new(num_bands: usize, num_classes: usize) -> Self {
        ModelConfig {
            num_bands,
            num_classes,
            filters: 20,
            kernel: 10,
            stride: 1,
            pool_width: 2,
            pool_stride: 2,
            dense_width: 100,
            coord_hidden: 256,
            keep_prob: 0.75,
            baseline: false,
        }
    }

    pub fn as_baseline(mut self) -> Self {
        self.baseline = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.num_bands,
            self.num_classes,
            self.filters,
            self.kernel,
            self.stride,
            self.pool_width,
            self.pool_stride,
            self.dense_width,
            self.coord_hidden,
        ];
        if widths.contains(&0) {
            return Err(Error::invalid("all model widths must be positive"));
        }
        if self.kernel > self.num_bands {
            return Err(Error::invalid(alloc::format!(
                "conv kernel {} is longer than the {}-band input",
                self.kernel,
                self.num_bands
            )));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::invalid("keep_prob must lie in (0, 1]"));
        }
        pool_len(self.conv_len(), self.pool_width, self.pool_stride)?;
        Ok(())
    }

    pub fn conv_len(&self) -> usize {
        (self.num_bands - self.kernel) / self.stride + 1
    }

    pub fn pooled_len(&self) -> usize {
        (self.conv_len() - self.pool_width) / self.pool_stride + 1
    }

    /// Length of the flattened pooled feature maps (filter-major).
    pub fn flat_dim(&self) -> usize {
        self.filters * self.pooled_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordBranch {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualBranchModel {
    config: ModelConfig,
    pub conv: Conv1dLayer,
    pub dense: DenseLayer,
    pub coord: Option<CoordBranch>,
    pub head: DenseLayer,
}

/// Intermediates of one forward pass, everything backward needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub mode: Mode,
    pub spectral: Vec<f64>,
    pub coords: [f64; 2],
    /// Conv feature maps after ReLU, `(filters, conv_len)`.
    pub conv_out: Vec<f64>,
    pub pooled: Vec<f64>,
    /// Flat `conv_out` index of each pooled maximum.
    pub pool_idx: Vec<usize>,
    /// Spectral dense output after ReLU, before dropout.
    pub hidden: Vec<f64>,
    pub dropout_mask: Vec<f64>,
    /// O1.
    pub branch1: Vec<f64>,
    /// Coordinate hidden layer after ReLU (empty for the baseline).
    pub coord_hidden: Vec<f64>,
    /// O2 (empty for the baseline).
    pub branch2: Vec<f64>,
    /// O1 + O2, or O1 for the baseline.
    pub fused: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Gradients for every parameter, in [`DualBranchModel::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub tensors: Vec<Tensor>,
}

impl ModelGrads {
    pub fn zeros_for(model: &DualBranchModel) -> Self {
        ModelGrads {
            tensors: model.parameters().iter().map(|t| t.zeros_like()).collect(),
        }
    }

    pub fn clear(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(factor));
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

impl DualBranchModel {
    /// Glorot weights and zero biases, drawn from `rng` in parameter order.
    pub fn build(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let conv = Conv1dLayer::init(rng, config.filters, config.kernel, config.stride)?;
        let dense = DenseLayer::init(rng, config.flat_dim(), config.dense_width, Activation::Relu)?;
        let coord = if config.baseline {
            None
        } else {
            Some(CoordBranch {
                hidden: DenseLayer::init(rng, 2, config.coord_hidden, Activation::Relu)?,
                output: DenseLayer::init(rng, config.coord_hidden, config.dense_width, Activation::Relu)?,
            })
        };
        let head = DenseLayer::init(rng, config.dense_width, config.num_classes, Activation::Softmax)?;
        Ok(DualBranchModel {
            config,
            conv,
            dense,
            coord,
            head,
        })
    }

    /// Rebuilds a model from parameters listed in [`Self::parameters`] order.
    pub fn from_parameters(config: ModelConfig, params: Vec<Tensor>) -> Result<Self> {
        let mut template = Self::build(config, &mut Rng::new(0))?;
        if params.len() != template.parameters().len() {
            return Err(Error::DimMismatch {
                context: "model parameter tensors",
                expected: template.parameters().len(),
                found: params.len(),
            });
        }
        for (slot, p) in template.parameters_mut().into_iter().zip(params) {
            if slot.shape() != p.shape() {
                return Err(Error::DimMismatch {
                    context: "model parameter shape",
                    expected: slot.len(),
                    found: p.len(),
                });
            }
            *slot = p;
        }
        Ok(template)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut ps = vec![
            &self.conv.weights,
            &self.conv.bias,
            &self.dense.weights,
            &self.dense.bias,
        ];
        if let Some(c) = &self.coord {
            ps.extend([&c.hidden.weights, &c.hidden.bias, &c.output.weights, &c.output.bias]);
        }
        ps.extend([&self.head.weights, &self.head.bias]);
        ps
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut ps = vec![
            &mut self.conv.weights,
            &mut self.conv.bias,
            &mut self.dense.weights,
            &mut self.dense.bias,
        ];
        if let Some(c) = &mut self.coord {
            ps.extend([
                &mut c.hidden.weights,
                &mut c.hidden.bias,
                &mut c.output.weights,
                &mut c.output.bias,
            ]);
        }
        ps.extend([&mut self.head.weights, &mut self.head.bias]);
        ps
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Forward pass. Train mode draws the dropout mask from `rng`.
    pub fn forward(&self, spectral: &[f64], coords: [f64; 2], mode: Mode, rng: &mut Rng) -> Result<ForwardCache> {
        self.forward_impl(spectral, coords, mode, Some(rng))
    }

    /// Inference-mode forward; needs no randomness.
    pub fn forward_inference(&self, spectral: &[f64], coords: [f64; 2]) -> Result<ForwardCache> {
        self.forward_impl(spectral, coords, Mode::Inference, None)
    }

    fn forward_impl(
        &self,
        spectral: &[f64],
        coords: [f64; 2],
        mode: Mode,
        rng: Option<&mut Rng>,
    ) -> Result<ForwardCache> {
        let cfg = &self.config;
        if spectral.len() != cfg.num_bands {
            return Err(Error::DimMismatch {
                context: "spectral input",
                expected: cfg.num_bands,
                found: spectral.len(),
            });
        }
        if !spectral.iter().chain(&coords).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("model input"));
        }

        let conv_len = cfg.conv_len();
        let mut conv_out = vec![0.0; cfg.filters * conv_len];
        self.conv.forward_into(spectral, &mut conv_out);

        let mut pooled = vec![0.0; cfg.flat_dim()];
        let mut pool_idx = vec![0usize; cfg.flat_dim()];
        maxpool_into(
            &conv_out,
            cfg.filters,
            conv_len,
            cfg.pool_width,
            cfg.pool_stride,
            &mut pooled,
            &mut pool_idx,
        );

        let mut hidden = vec![0.0; cfg.dense_width];
        self.dense.forward_into(&pooled, &mut hidden);

        let spec = DropoutSpec {
            keep_prob: cfg.keep_prob,
            mode,
        };
        let (branch1, dropout_mask) = match rng {
            Some(rng) => dropout(&spec, rng, &hidden)?,
            None if mode == Mode::Inference || cfg.keep_prob == 1.0 => {
                (hidden.clone(), vec![1.0; hidden.len()])
            }
            None => return Err(Error::invalid("train-mode dropout needs an rng")),
        };

        let (coord_hidden, branch2, fused) = match &self.coord {
            Some(c) => {
                let mut h = vec![0.0; cfg.coord_hidden];
                c.hidden.forward_into(&coords, &mut h);
                let mut o2 = vec![0.0; cfg.dense_width];
                c.output.forward_into(&h, &mut o2);
                let fused = branch1.iter().zip(&o2).map(|(a, b)| a + b).collect();
                (h, o2, fused)
            }
            None => (Vec::new(), Vec::new(), branch1.clone()),
        };

        let mut probs = vec![0.0; cfg.num_classes];
        self.head.forward_into(&fused, &mut probs);
        if !probs.iter().all(|p| p.is_finite()) {
            return Err(Error::NonFinite("model output"));
        }

        Ok(ForwardCache {
            mode,
            spectral: spectral.to_vec(),
            coords,
            conv_out,
            pooled,
            pool_idx,
            hidden,
            dropout_mask,
            branch1,
            coord_hidden,
            branch2,
            fused,
            probs,
        })
    }

    /// Cross-entropy gradients for `label` (1-based) from a train-mode cache.
    pub fn backward(&self, cache: &ForwardCache, label: u16) -> Result<ModelGrads> {
        let mut grads = ModelGrads::zeros_for(self);
        self.accumulate_gradients(cache, label, &mut grads)?;
        Ok(grads)
    }

    /// Adds this sample's gradients into `grads` and returns its loss.
    pub fn accumulate_gradients(&self, cache: &ForwardCache, label: u16, grads: &mut ModelGrads) -> Result<f64> {
        if cache.mode != Mode::Train {
            return Err(Error::InferenceCache);
        }
        let cfg = &self.config;
        if label == 0 || label as usize > cfg.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: cfg.num_classes,
            });
        }
        if grads.tensors.len() != self.parameters().len() {
            return Err(Error::DimMismatch {
                context: "gradient buffer",
                expected: self.parameters().len(),
                found: grads.tensors.len(),
            });
        }
        let ce = cross_entropy(&cache.probs, label as usize - 1)?;

        let [.., head_w, head_b] = &mut grads.tensors[..] else {
            unreachable!("head owns the last two tensors")
        };
        let mut g_fused = vec![0.0; cfg.dense_width];
        self.head.affine_backward_into(
            &cache.fused,
            &ce.logit_grad,
            head_w.data_mut(),
            head_b.data_mut(),
            Some(&mut g_fused),
        );

        // Addition passes the fused gradient unchanged to both branches.
        if let Some(c) = &self.coord {
            let g_o2 = c.output.activation_backward(&cache.branch2, &g_fused);
            let mut g_h = vec![0.0; cfg.coord_hidden];
            let [hw, hb, ow, ob] = &mut grads.tensors[4..8] else {
                unreachable!("coordinate branch owns four tensors")
            };
            c.output
                .affine_backward_into(&cache.coord_hidden, &g_o2, ow.data_mut(), ob.data_mut(), Some(&mut g_h));
            let g_hz = c.hidden.activation_backward(&cache.coord_hidden, &g_h);
            c.hidden
                .affine_backward_into(&cache.coords, &g_hz, hw.data_mut(), hb.data_mut(), None);
        }

        let g_hidden: Vec<f64> = g_fused
            .iter()
            .zip(&cache.dropout_mask)
            .map(|(g, m)| g * m)
            .collect();
        let g_dz = self.dense.activation_backward(&cache.hidden, &g_hidden);
        let mut g_pooled = vec![0.0; cfg.flat_dim()];
        let [cw, cb, dw, db] = &mut grads.tensors[0..4] else {
            unreachable!("spectral branch owns four tensors")
        };
        self.dense
            .affine_backward_into(&cache.pooled, &g_dz, dw.data_mut(), db.data_mut(), Some(&mut g_pooled));

        let mut g_conv = vec![0.0; cache.conv_out.len()];
        for (&i, &g) in cache.pool_idx.iter().zip(&g_pooled) {
            g_conv[i] += g;
        }
        self.conv.backward_into(
            &cache.spectral,
            &cache.conv_out,
            &g_conv,
            cw.data_mut(),
            cb.data_mut(),
            None,
        );
        Ok(ce.loss)
    }

    /// Most probable class id (1-based), lowest id on ties.
    pub fn predict(&self, spectral: &[f64], coords: [f64; 2]) -> Result<u16> {
        let cache = self.forward_inference(spectral, coords)?;
        Ok(argmax(&cache.probs) as u16 + 1)
    }

    /// Class distribution in inference mode.
    pub fn predict_proba(&self, spectral: &[f64], coords: [f64; 2]) -> Result<Vec<f64>> {
        Ok(self.forward_inference(spectral, coords)?.probs)
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ModelConfig {
        let mut c = ModelConfig::new(24, 5);
        c.dense_width = 12;
        c.coord_hidden = 16;
        c.filters = 4;
        c.kernel = 5;
        c
    }

    #[test]
    fn full_size_parameter_count() {
        let m = DualBranchModel::build(ModelConfig::new(220, 16), &mut Rng::new(1)).unwrap();
        let expected = (20 * 10 + 20) + (2100 * 100 + 100) + (2 * 256 + 256) + (256 * 100 + 100) + (100 * 16 + 16);
        assert_eq!(m.config().flat_dim(), 2100);
        assert_eq!(m.parameter_count(), expected);
    }

    #[test]
    fn build_is_deterministic() {
        let a = DualBranchModel::build(small_config(), &mut Rng::new(4)).unwrap();
        let b = DualBranchModel::build(small_config(), &mut Rng::new(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.conv.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kernel_longer_than_input_fails() {
        let err = DualBranchModel::build(ModelConfig::new(5, 3), &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn baseline_ignores_coords() {
        let mut rng = Rng::new(3);
        let m = DualBranchModel::build(small_config().as_baseline(), &mut rng).unwrap();
        let x: Vec<f64> = (0..24).map(|_| rng.uniform()).collect();
        let a = m.forward_inference(&x, [0.0, 0.0]).unwrap();
        let b = m.forward_inference(&x, [1.0, 0.3]).unwrap();
        assert_eq!(a.probs, b.probs);
        assert!(a.branch2.is_empty());
    }

    #[test]
    fn zero_head_gives_uniform() {
        let mut rng = Rng::new(3);
        let mut m = DualBranchModel::build(small_config(), &mut rng).unwrap();
        m.head.weights.fill(0.0);
        m.head.bias.fill(0.0);
        let x: Vec<f64> = (0..24).map(|_| rng.uniform()).collect();
        let p = m.forward_inference(&x, [0.2, 0.7]).unwrap().probs;
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn inference_cache_rejected_by_backward() {
        let mut rng = Rng::new(3);
        let m = DualBranchModel::build(small_config(), &mut rng).unwrap();
        let cache = m.forward_inference(&[0.5; 24], [0.1, 0.1]).unwrap();
        assert_eq!(m.backward(&cache, 1).unwrap_err(), Error::InferenceCache);
    }

    #[test]
    fn input_dims_checked() {
        let m = DualBranchModel::build(small_config(), &mut Rng::new(3)).unwrap();
        assert!(m.forward_inference(&[0.5; 23], [0.0, 0.0]).is_err());
        assert!(m.forward_inference(&[f64::NAN; 24], [0.0, 0.0]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.8, 0.1]) + 1, 2);
        assert_eq!(argmax(&[0.5, 0.5]) + 1, 1);
    }

    #[test]
    fn inference_is_bitwise_repeatable() {
        let mut rng = Rng::new(9);
        let m = DualBranchModel::build(small_config(), &mut rng).unwrap();
        let x: Vec<f64> = (0..24).map(|_| rng.uniform()).collect();
        assert_eq!(
            m.forward_inference(&x, [0.3, 0.4]).unwrap(),
            m.forward_inference(&x, [0.3, 0.4]).unwrap()
        );
    }

    #[test]
    fn from_parameters_round_trip() {
        let m = DualBranchModel::build(small_config(), &mut Rng::new(12)).unwrap();
        let params: Vec<Tensor> = m.parameters().into_iter().cloned().collect();
        let back = DualBranchModel::from_parameters(*m.config(), params).unwrap();
        assert_eq!(back, m);
    }
}
