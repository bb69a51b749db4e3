//! Independent reference implementations shared by the gradient and
//! acceptance tests. Nothing here calls into the code paths it checks,
//! except to read parameters and evaluate forward passes for finite
//! differences.

#![allow(dead_code)]

use geofuse_core::layers::{
    cross_entropy, maxpool1d, maxpool1d_backward, softmax, Activation, Conv1dLayer, DenseLayer, Mode,
};
use geofuse_core::eval::{dense_energy, CrfParams, EnergyInput};
use geofuse_core::model::{DualBranchModel, ForwardCache, ModelConfig};
use geofuse_core::numerics::{Rng, Tensor};

/// Relative-error bound for single layers.
pub const LAYER_TOL: f64 = 1e-6;
/// Relative-error bound for the whole network.
pub const MODEL_TOL: f64 = 1e-5;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Below this magnitude, gradients are compared absolutely: FD round-off at
/// `h = 1e-5` is ~1e-11 for O(1) losses, so relative error is meaningless for
/// gradients much smaller than this.
pub const REL_FLOOR: f64 = 1e-4;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central difference of `f` around `x[i]`, restoring `x[i]` afterwards.
pub fn central_diff(x: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + FD_STEP;
    let plus = f(x);
    x[i] = orig - FD_STEP;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * FD_STEP)
}

pub fn random_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Valid stride-`s` convolution with ReLU, written as the textbook double loop.
pub fn naive_conv(w: &[f64], b: &[f64], filters: usize, k: usize, s: usize, x: &[f64]) -> Vec<f64> {
    let len = (x.len() - k) / s + 1;
    let mut out = vec![0.0; filters * len];
    for j in 0..filters {
        for t in 0..len {
            let mut z = b[j];
            for q in 0..k {
                z += w[j * k + q] * x[t * s + q];
            }
            out[j * len + t] = if z > 0.0 { z } else { 0.0 };
        }
    }
    out
}

pub fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `f(Wᵀv + b)` with `W` stored `(in, out)`.
pub fn naive_dense(w: &[f64], b: &[f64], act: Activation, v: &[f64]) -> Vec<f64> {
    let out_dim = b.len();
    let mut z = vec![0.0; out_dim];
    for o in 0..out_dim {
        let mut acc = b[o];
        for i in 0..v.len() {
            acc += w[i * out_dim + o] * v[i];
        }
        z[o] = acc;
    }
    match act {
        Activation::Relu => z.iter().map(|&x| x.max(0.0)).collect(),
        Activation::Softmax => naive_softmax(&z),
        Activation::Identity => z,
    }
}

/// Every discrete decision of a forward pass (ReLU gates and pool winners).
/// Finite differences are only valid where this does not change.
pub fn activation_pattern(c: &ForwardCache) -> Vec<usize> {
    let gate = |v: &[f64]| v.iter().map(|&x| (x > 0.0) as usize).collect::<Vec<_>>();
    let mut p = gate(&c.conv_out);
    p.extend(&c.pool_idx);
    p.extend(gate(&c.hidden));
    p.extend(gate(&c.coord_hidden));
    p.extend(gate(&c.branch2));
    p
}

/// Outcome of a whole-model gradient check.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

/// Compares `model.backward` against central differences of the
/// cross-entropy for every parameter. The model must have `keep_prob == 1`
/// so train-mode forwards are deterministic.
pub fn check_model_gradients(model: &DualBranchModel, x: &[f64], coords: [f64; 2], label: u16) -> GradCheck {
    assert_eq!(model.config().keep_prob, 1.0);
    let mut rng = Rng::new(0);
    let cache = model.forward(x, coords, Mode::Train, &mut rng).unwrap();
    let base_pattern = activation_pattern(&cache);
    let grads = model.backward(&cache, label).unwrap();

    let eval = |m: &DualBranchModel| -> (f64, Vec<usize>) {
        let c = m.forward(x, coords, Mode::Train, &mut Rng::new(0)).unwrap();
        let p = c.probs[label as usize - 1];
        (-p.ln(), activation_pattern(&c))
    };

    let mut out = GradCheck::default();
    let mut probe = model.clone();
    let n_params = model.parameters().len();
    for t in 0..n_params {
        let len = model.parameters()[t].len();
        for i in 0..len {
            let orig = probe.parameters()[t].data()[i];
            probe.parameters_mut()[t].data_mut()[i] = orig + FD_STEP;
            let (lp, pp) = eval(&probe);
            probe.parameters_mut()[t].data_mut()[i] = orig - FD_STEP;
            let (lm, pm) = eval(&probe);
            probe.parameters_mut()[t].data_mut()[i] = orig;
            if pp != base_pattern || pm != base_pattern {
                out.skipped_kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let analytic = grads.tensors[t].data()[i];
            out.max_rel_error = out.max_rel_error.max(rel_error(analytic, numeric));
            out.checked += 1;
        }
    }
    out
}

/// Textbook OA/AA/kappa straight from the formulas in floating point.
pub fn naive_metrics(k: usize, counts: &[u64]) -> (f64, f64, f64) {
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let mut diag = 0.0;
    let mut accs = Vec::new();
    let mut pe = 0.0;
    for i in 0..k {
        let row: f64 = (0..k).map(|j| counts[i * k + j] as f64).sum();
        let col: f64 = (0..k).map(|j| counts[j * k + i] as f64).sum();
        diag += counts[i * k + i] as f64;
        if row > 0.0 {
            accs.push(counts[i * k + i] as f64 / row);
        }
        pe += (row / total) * (col / total);
    }
    let po = diag / total;
    let aa = accs.iter().sum::<f64>() / accs.len() as f64;
    (po, aa, (po - pe) / (1.0 - pe))
}

/// Exact-as-possible sum: sorts by magnitude, then accumulates with
/// Kahan-Babuska compensation.
pub fn accurate_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in terms {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// Dense CRF energy as a plain double loop over all ordered pairs `i != j`.
#[allow(clippy::too_many_arguments)]
pub fn naive_energy(
    h: usize,
    w: usize,
    labels: &[u16],
    probs: &[f64],
    app: &[f64],
    w1: f64,
    w2: f64,
    ta: f64,
    tb: f64,
    tg: f64,
) -> f64 {
    let n = h * w;
    let k = probs.len() / n;
    let d = app.len() / n;
    let mut terms = Vec::new();
    for i in 0..n {
        terms.push(-probs[i * k + labels[i] as usize - 1].max(1e-12).ln());
    }
    for i in 0..n {
        for j in 0..n {
            if i == j || labels[i] == labels[j] {
                continue;
            }
            let pi = ((i / w) as f64, (i % w) as f64);
            let pj = ((j / w) as f64, (j % w) as f64);
            let dp = (pi.0 - pj.0).powi(2) + (pi.1 - pj.1).powi(2);
            let mut di = 0.0;
            for q in 0..d {
                di += (app[i * d + q] - app[j * d + q]).powi(2);
            }
            let appearance = (-dp / (2.0 * ta * ta) - di / (2.0 * tb * tb)).exp();
            let smooth = (-dp / (2.0 * tg * tg)).exp();
            terms.push(w1 * appearance + w2 * smooth);
        }
    }
    accurate_sum(terms)
}

pub fn random_conv(rng: &mut Rng, filters: usize, k: usize, stride: usize) -> Conv1dLayer {
    let mut layer = Conv1dLayer::init(rng, filters, k, stride).unwrap();
    for b in layer.bias.data_mut() {
        *b = 0.3 * rng.normal();
    }
    layer
}

pub fn random_dense(rng: &mut Rng, i: usize, o: usize, act: Activation) -> DenseLayer {
    let mut layer = DenseLayer::init(rng, i, o, act).unwrap();
    for b in layer.bias.data_mut() {
        *b = 0.3 * rng.normal();
    }
    layer
}

/// Worst relative error of the conv backward pass (weights, bias, input)
/// against central differences of `Σ r·conv(x)`, skipping ReLU kinks.
pub fn conv_fd_error(seed: u64) -> f64 {
    let mut rng = Rng::new(100 + seed);
    let (filters, k, stride) = (4, 5, 1 + (seed as usize % 2));
    let layer = random_conv(&mut rng, filters, k, stride);
    let x = random_vec(&mut rng, 23);
    let out = layer.forward(&x).unwrap();
    let r = Tensor::from_vec(out.shape(), random_vec(&mut rng, out.len())).unwrap();
    let g = layer.backward(&x, &out, &r).unwrap();

    let loss = |w: &[f64], b: &[f64], x: &[f64]| -> (f64, Vec<bool>) {
        let y = naive_conv(w, b, filters, k, stride, x);
        (y.iter().zip(r.data()).map(|(a, b)| a * b).sum(), y.iter().map(|&v| v > 0.0).collect())
    };
    let (_, base) = loss(layer.weights.data(), layer.bias.data(), &x);
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, f: &mut dyn FnMut(f64) -> (f64, Vec<bool>)| {
        let (lp, pp) = f(FD_STEP);
        let (lm, pm) = f(-FD_STEP);
        if pp == base && pm == base {
            worst = worst.max(rel_error(analytic, (lp - lm) / (2.0 * FD_STEP)));
        }
    };
    let mut w = layer.weights.data().to_vec();
    for i in 0..w.len() {
        check(g.weights.data()[i], &mut |h| {
            let o = w[i];
            w[i] = o + h;
            let r = loss(&w, layer.bias.data(), &x);
            w[i] = o;
            r
        });
    }
    let mut b = layer.bias.data().to_vec();
    for i in 0..b.len() {
        check(g.bias.data()[i], &mut |h| {
            let o = b[i];
            b[i] = o + h;
            let r = loss(layer.weights.data(), &b, &x);
            b[i] = o;
            r
        });
    }
    let mut xs = x.clone();
    for i in 0..xs.len() {
        check(g.input[i], &mut |h| {
            let o = xs[i];
            xs[i] = o + h;
            let r = loss(layer.weights.data(), layer.bias.data(), &xs);
            xs[i] = o;
            r
        });
    }
    worst
}

/// Worst relative error of the max-pool backward pass (3 maps of odd length).
pub fn maxpool_fd_error(seed: u64) -> f64 {
    let mut rng = Rng::new(200 + seed);
    let x = Tensor::from_vec(&[3, 11], random_vec(&mut rng, 33)).unwrap();
    let (pooled, idx) = maxpool1d(&x, 2, 2).unwrap();
    let r = Tensor::from_vec(pooled.shape(), random_vec(&mut rng, pooled.len())).unwrap();
    let g = maxpool1d_backward(x.shape(), &idx, &r).unwrap();
    let mut xs = x.data().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..xs.len() {
        let numeric = central_diff(&mut xs, i, |v| {
            let t = Tensor::from_vec(&[3, 11], v.to_vec()).unwrap();
            let (p, _) = maxpool1d(&t, 2, 2).unwrap();
            p.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        });
        worst = worst.max(rel_error(g.data()[i], numeric));
    }
    worst
}

/// Worst relative error of a dense layer's backward pass for one activation.
pub fn dense_fd_error(seed: u64, act: Activation) -> f64 {
    let mut rng = Rng::new(400 + seed + 1000 * act as u64);
    let layer = random_dense(&mut rng, 7, 5, act);
    let v = random_vec(&mut rng, 7);
    let out = layer.forward(&v).unwrap();
    let r = random_vec(&mut rng, 5);
    let g = layer.backward(&v, &out, &r).unwrap();
    let loss = |w: &[f64], b: &[f64], v: &[f64]| -> (f64, Vec<bool>) {
        let y = naive_dense(w, b, act, v);
        let pre = naive_dense(w, b, Activation::Identity, v);
        (y.iter().zip(&r).map(|(a, b)| a * b).sum(), pre.iter().map(|&z| z > 0.0).collect())
    };
    let (_, base) = loss(layer.weights.data(), layer.bias.data(), &v);
    let mut worst: f64 = 0.0;
    let mut consider = |analytic: f64, plus: (f64, Vec<bool>), minus: (f64, Vec<bool>)| {
        if act != Activation::Relu || (plus.1 == base && minus.1 == base) {
            worst = worst.max(rel_error(analytic, (plus.0 - minus.0) / (2.0 * FD_STEP)));
        }
    };
    let mut w = layer.weights.data().to_vec();
    for i in 0..w.len() {
        let o = w[i];
        w[i] = o + FD_STEP;
        let p = loss(&w, layer.bias.data(), &v);
        w[i] = o - FD_STEP;
        let m = loss(&w, layer.bias.data(), &v);
        w[i] = o;
        consider(g.weights.data()[i], p, m);
    }
    let mut b = layer.bias.data().to_vec();
    for i in 0..b.len() {
        let o = b[i];
        b[i] = o + FD_STEP;
        let p = loss(layer.weights.data(), &b, &v);
        b[i] = o - FD_STEP;
        let m = loss(layer.weights.data(), &b, &v);
        b[i] = o;
        consider(g.bias.data()[i], p, m);
    }
    let mut vs = v.clone();
    for i in 0..vs.len() {
        let o = vs[i];
        vs[i] = o + FD_STEP;
        let p = loss(layer.weights.data(), layer.bias.data(), &vs);
        vs[i] = o - FD_STEP;
        let m = loss(layer.weights.data(), layer.bias.data(), &vs);
        vs[i] = o;
        consider(g.input[i], p, m);
    }
    worst
}

/// Worst relative error of the softmax + cross-entropy logit gradient.
pub fn softmax_ce_fd_error(seed: u64) -> f64 {
    let mut rng = Rng::new(500 + seed);
    let z: Vec<f64> = random_vec(&mut rng, 8).iter().map(|v| 2.0 * v).collect();
    let target = rng.below(8);
    let ce = cross_entropy(&softmax(&z), target).unwrap();
    let mut zs = z.clone();
    let mut worst: f64 = 0.0;
    for i in 0..8 {
        let numeric = central_diff(&mut zs, i, |v| -naive_softmax(v)[target].ln());
        worst = worst.max(rel_error(ce.logit_grad[i], numeric));
    }
    worst
}

/// Reduced network used for whole-model checks: every code path of the
/// full-size model, few enough parameters to difference all of them.
pub fn small_config(baseline: bool) -> ModelConfig {
    let mut c = ModelConfig::new(24, 5);
    c.filters = 4;
    c.kernel = 5;
    c.dense_width = 12;
    c.coord_hidden = 16;
    c.keep_prob = 1.0;
    c.baseline = baseline;
    c
}

/// Perturbs every bias so ReLU units are not pinned at exactly zero.
pub fn jitter_biases(model: &mut DualBranchModel, rng: &mut Rng) {
    let n = model.parameters().len();
    for t in (1..n).step_by(2) {
        for b in model.parameters_mut()[t].data_mut() {
            *b = 0.1 * rng.normal();
        }
    }
}

/// Whole-model check on a random input for one seed.
pub fn model_fd_check(seed: u64, baseline: bool) -> GradCheck {
    let mut rng = Rng::new(700 + seed);
    let mut model = DualBranchModel::build(small_config(baseline), &mut rng).unwrap();
    jitter_biases(&mut model, &mut rng);
    let x: Vec<f64> = (0..24).map(|_| rng.uniform()).collect();
    let coords = [rng.uniform(), rng.uniform()];
    let label = 1 + rng.below(5) as u16;
    check_model_gradients(&model, &x, coords, label)
}

/// Largest |library − textbook| over OA, AA and kappa on `count` random
/// confusion matrices (2 to 16 classes, counts from tiny to large).
pub fn metric_oracle_max_diff(count: usize, seed: u64) -> f64 {
    use geofuse_core::eval::{metrics, ConfusionMatrix};
    use geofuse_core::Error;
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < count {
        let k = 2 + rng.below(15);
        let scale = [3, 50, 5000][rng.below(3)];
        let counts: Vec<u64> = (0..k * k)
            .map(|i| {
                let diag = i / k == i % k;
                (rng.below(scale) * if diag { 4 } else { 1 }) as u64
            })
            .collect();
        let cm = ConfusionMatrix::from_counts(k, counts.clone()).unwrap();
        let report = match metrics(&cm) {
            Ok(r) => r,
            Err(Error::KappaUndefined) | Err(Error::Empty(_)) => continue,
            Err(e) => panic!("{e}"),
        };
        let (oa, aa, kappa) = naive_metrics(k, &counts);
        worst = worst
            .max((report.overall_accuracy - oa).abs())
            .max((report.average_accuracy - aa).abs())
            .max((report.kappa - kappa).abs());
        checked += 1;
    }
    worst
}

pub struct EnergyInstance {
    pub h: usize,
    pub w: usize,
    pub labels: Vec<u16>,
    pub probs: Vec<f64>,
    pub app: Vec<f64>,
}

/// Random labeling, normalized class distributions and appearance vectors.
pub fn energy_instance(rng: &mut Rng, h: usize, w: usize, k: usize, d: usize) -> EnergyInstance {
    let n = h * w;
    let labels = (0..n).map(|_| 1 + rng.below(k) as u16).collect();
    let mut probs = Vec::with_capacity(n * k);
    for _ in 0..n {
        let raw: Vec<f64> = (0..k).map(|_| rng.uniform() + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|v| v / s));
    }
    let app = (0..n * d).map(|_| rng.uniform()).collect();
    EnergyInstance { h, w, labels, probs, app }
}

pub fn random_crf_params(rng: &mut Rng) -> CrfParams {
    CrfParams {
        w_appearance: rng.uniform_range(0.0, 5.0),
        w_smoothness: rng.uniform_range(0.0, 5.0),
        theta_alpha: rng.uniform_range(0.5, 20.0),
        theta_beta: rng.uniform_range(0.05, 2.0),
        theta_gamma: rng.uniform_range(0.5, 10.0),
    }
}

/// Largest |dense_energy − all-pairs loop| over `draws` random `side × side`
/// instances with random kernel parameters.
pub fn energy_oracle_max_diff(draws: usize, side: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let inst = energy_instance(&mut rng, side, side, 4, 3);
        let p = random_crf_params(&mut rng);
        let input = EnergyInput {
            height: side,
            width: side,
            labels: &inst.labels,
            probs: &inst.probs,
            appearance: &inst.app,
        };
        let fast = dense_energy(&input, &p).unwrap().total();
        let slow = naive_energy(
            side, side, &inst.labels, &inst.probs, &inst.app,
            p.w_appearance, p.w_smoothness, p.theta_alpha, p.theta_beta, p.theta_gamma,
        );
        worst = worst.max((fast - slow).abs());
    }
    worst
}
