//! Adam and the mini-batch training loop.

use alloc::vec::Vec;

use crate::dataset::SampleSet;
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::{argmax, DualBranchModel, ModelGrads};
use crate::numerics::{Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // lr == 0 is allowed: it freezes parameters, which tests rely on.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::invalid("Adam epsilon must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// First/second moment estimates mirroring the parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| p.zeros_like()).collect(),
            v: params.iter().map(|p| p.zeros_like()).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Fails without touching anything if a
/// gradient is not finite.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimMismatch {
            context: "adam parameter list",
            expected: params.len(),
            found: grads.len(),
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::DimMismatch {
                context: "adam parameter shape",
                expected: p.len(),
                found: g.len(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
    }

    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    let (b1, b2, lr, eps) = (cfg.beta1, cfg.beta2, cfg.learning_rate, cfg.epsilon);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((theta, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *theta -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

pub fn train(model: &mut DualBranchModel, set: &SampleSet, cfg: &TrainConfig, rng: &mut Rng) -> Result<TrainHistory> {
    train_with_progress(model, set, cfg, rng, |_| {})
}

/// Runs exactly `max_epochs` epochs. Each epoch shuffles the sample order,
/// then for every mini-batch averages the per-sample gradients (accumulated
/// in ascending sample-index order, dropout active) and takes one Adam step.
/// Loss and accuracy are measured on the train-mode forward passes.
pub fn train_with_progress(
    model: &mut DualBranchModel,
    set: &SampleSet,
    cfg: &TrainConfig,
    rng: &mut Rng,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainHistory> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let bands = model.config().num_bands;
    if let Some(s) = set.iter().find(|s| s.features.len() != bands) {
        return Err(Error::DimMismatch {
            context: "training sample bands",
            expected: bands,
            found: s.features.len(),
        });
    }

    let mut state = AdamState::new(&model.parameters());
    let mut grads = ModelGrads::zeros_for(model);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut history = TrainHistory::default();
    let samples = set.samples();

    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut batch = batch.to_vec();
            batch.sort_unstable();
            grads.clear();
            for &i in &batch {
                let s = &samples[i];
                let cache = model.forward(&s.features, s.coords, Mode::Train, rng)?;
                if argmax(&cache.probs) + 1 == s.label as usize {
                    correct += 1;
                }
                loss_sum += model.accumulate_gradients(&cache, s.label, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut model.parameters_mut(), &grads.tensors, &mut state, cfg)?;
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / set.len() as f64,
            train_accuracy: correct as f64 / set.len() as f64,
        };
        if !stats.loss.is_finite() {
            log::error!("training loss diverged at epoch {epoch}");
            return Err(Error::NonFinite("training loss"));
        }
        if epoch % 50 == 0 || epoch == 1 || epoch == cfg.max_epochs {
            log::info!(
                "epoch {epoch}/{}: loss {:.6}, train acc {:.4}",
                cfg.max_epochs,
                stats.loss,
                stats.train_accuracy
            );
        }
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    Ok(history)
}
