//! Accuracy metrics, class-map colouring, and the dense CRF energy diagnostic.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layers::LOG_EPSILON;

/// `K × K` counts; rows are ground truth, columns predictions, both 1-based
/// class ids mapped to index `id - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_classes * num_classes {
            return Err(Error::DimMismatch {
                context: "confusion matrix counts",
                expected: num_classes * num_classes,
                found: counts.len(),
            });
        }
        Ok(ConfusionMatrix { num_classes, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, u64> {
        self.counts.chunks_exact(self.num_classes.max(1))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let k = self.num_classes;
        (0..k).map(|c| (0..k).map(|r| self.get(r, c)).sum()).collect()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|i| self.get(i, i)).sum()
    }

    pub fn add(&mut self, truth: u16, pred: u16) -> Result<()> {
        let k = self.num_classes;
        for l in [truth, pred] {
            if l == 0 || l as usize > k {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    num_classes: k,
                });
            }
        }
        self.counts[(truth as usize - 1) * k + pred as usize - 1] += 1;
        Ok(())
    }
}

pub fn confusion(preds: &[u16], truth: &[u16], num_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::DimMismatch {
            context: "predictions vs truth",
            expected: truth.len(),
            found: preds.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(num_classes);
    for (&p, &t) in preds.iter().zip(truth) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Producer's accuracy per class; `None` for classes absent from the truth.
    pub per_class: Vec<Option<f64>>,
    pub overall_accuracy: f64,
    /// Mean over classes with at least one truth sample.
    pub average_accuracy: f64,
    pub kappa: f64,
    pub total: u64,
}

/// OA, AA and Cohen's kappa. Kappa is evaluated as
/// `(N·trace − Σ rᵢcᵢ) / (N² − Σ rᵢcᵢ)` in integers before the final
/// division, which equals `(p_o − p_e)/(1 − p_e)` without intermediate rounding.
pub fn metrics(cm: &ConfusionMatrix) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    let per_class: Vec<Option<f64>> = rows
        .iter()
        .enumerate()
        .map(|(i, &r)| (r > 0).then(|| cm.get(i, i) as f64 / r as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let average_accuracy = present.iter().sum::<f64>() / present.len() as f64;

    let n = total as u128;
    let trace = cm.trace() as u128;
    let chance: u128 = rows.iter().zip(&cols).map(|(&r, &c)| r as u128 * c as u128).sum();
    if chance == n * n {
        return Err(Error::KappaUndefined);
    }
    let num = (n * trace) as f64 - chance as f64;
    let den = (n * n - chance) as f64;
    Ok(EvalReport {
        per_class,
        overall_accuracy: trace as f64 / total as f64,
        average_accuracy,
        kappa: num / den,
        total,
    })
}

/// Colour 0 (unlabeled) is black; classes 1..=16 use a fixed table, beyond
/// that hues advance by the golden angle.
pub fn default_palette(num_classes: usize) -> Vec<[u8; 3]> {
    const FIXED: [[u8; 3]; 16] = [
        [255, 254, 137],
        [3, 28, 241],
        [255, 89, 1],
        [5, 255, 133],
        [255, 2, 251],
        [89, 1, 255],
        [3, 171, 255],
        [12, 255, 7],
        [172, 175, 84],
        [160, 78, 158],
        [101, 173, 255],
        [60, 91, 112],
        [104, 192, 63],
        [139, 69, 46],
        [119, 255, 172],
        [254, 255, 3],
    ];
    let mut palette = vec![[0, 0, 0]];
    for c in 0..num_classes {
        palette.push(match FIXED.get(c) {
            Some(&rgb) => rgb,
            None => hue_color(c as f64 * 137.507_764),
        });
    }
    palette
}

fn hue_color(degrees: f64) -> [u8; 3] {
    let h = (degrees % 360.0) / 60.0;
    let x = 1.0 - libm::fabs(h % 2.0 - 1.0);
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let to8 = |v: f64| (55.0 + 200.0 * v) as u8;
    [to8(r), to8(g), to8(b)]
}

/// Interleaved RGB bytes for a class map. `palette[0]` colours label 0.
pub fn render_rgb(labels: &[u16], num_classes: usize, palette: &[[u8; 3]]) -> Result<Vec<u8>> {
    if palette.len() < num_classes + 1 {
        return Err(Error::PaletteTooSmall {
            available: palette.len(),
            required: num_classes + 1,
        });
    }
    let mut rgb = Vec::with_capacity(labels.len() * 3);
    for &l in labels {
        if l as usize > num_classes {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes,
            });
        }
        rgb.extend_from_slice(&palette[l as usize]);
    }
    Ok(rgb)
}

/// Weights and bandwidths of the two Gaussian pairwise kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrfParams {
    /// Appearance kernel weight.
    pub w_appearance: f64,
    /// Smoothness kernel weight.
    pub w_smoothness: f64,
    /// Position bandwidth of the appearance kernel, in pixels.
    pub theta_alpha: f64,
    /// Appearance-vector bandwidth of the appearance kernel.
    pub theta_beta: f64,
    /// Position bandwidth of the smoothness kernel, in pixels.
    pub theta_gamma: f64,
}

impl Default for CrfParams {
    fn default() -> Self {
        CrfParams {
            w_appearance: 1.0,
            w_smoothness: 1.0,
            theta_alpha: 8.0,
            theta_beta: 0.1,
            theta_gamma: 3.0,
        }
    }
}

/// A labeled raster with everything the energy needs, all row-major over the
/// same `height × width` grid.
#[derive(Debug, Clone, Copy)]
pub struct EnergyInput<'a> {
    pub height: usize,
    pub width: usize,
    /// 1-based class per pixel.
    pub labels: &'a [u16],
    /// Class distribution per pixel, `num_classes` values each.
    pub probs: &'a [f64],
    /// Appearance vector per pixel, equal length for all pixels.
    pub appearance: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub unary: f64,
    pub pairwise: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.unary + self.pairwise
    }
}

/// Fully connected CRF energy of a labeling:
///
/// `E = Σᵢ −ln max(Pᵢ[xᵢ], ε) + Σ_{i≠j} [xᵢ≠xⱼ] (w₁ exp(−|pᵢ−pⱼ|²/2θα² − |Iᵢ−Iⱼ|²/2θβ²) + w₂ exp(−|pᵢ−pⱼ|²/2θγ²))`
///
/// over ordered pixel pairs, with positions `p` in pixel units. Brute force,
/// `O(N²)`; meant for crops of a few thousand pixels.
pub fn dense_energy(input: &EnergyInput<'_>, params: &CrfParams) -> Result<Energy> {
    let n = input.height * input.width;
    if n == 0 {
        return Err(Error::Empty("energy raster"));
    }
    if input.labels.len() != n {
        return Err(Error::DimMismatch {
            context: "energy labels",
            expected: n,
            found: input.labels.len(),
        });
    }
    if input.probs.is_empty() || !input.probs.len().is_multiple_of(n) {
        return Err(Error::DimMismatch {
            context: "energy probability map",
            expected: n,
            found: input.probs.len(),
        });
    }
    if !input.appearance.len().is_multiple_of(n) {
        return Err(Error::DimMismatch {
            context: "energy appearance vectors",
            expected: n,
            found: input.appearance.len(),
        });
    }
    for theta in [params.theta_alpha, params.theta_beta, params.theta_gamma] {
        if theta.is_nan() || theta <= 0.0 {
            return Err(Error::invalid("CRF bandwidths must be positive"));
        }
    }
    let k = input.probs.len() / n;
    let d = input.appearance.len() / n;
    if let Some(&bad) = input.labels.iter().find(|&&l| l == 0 || l as usize > k) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_classes: k,
        });
    }

    let mut unary = CompensatedSum::default();
    for (i, &l) in input.labels.iter().enumerate() {
        unary.add(-libm::log(input.probs[i * k + l as usize - 1].max(LOG_EPSILON)));
    }

    let a_scale = 1.0 / (2.0 * params.theta_alpha * params.theta_alpha);
    let b_scale = 1.0 / (2.0 * params.theta_beta * params.theta_beta);
    let g_scale = 1.0 / (2.0 * params.theta_gamma * params.theta_gamma);
    let w = input.width;
    let mut pairwise = CompensatedSum::default();
    for i in 0..n {
        let (ri, ci) = ((i / w) as f64, (i % w) as f64);
        let ai = &input.appearance[i * d..(i + 1) * d];
        for j in i + 1..n {
            if input.labels[i] == input.labels[j] {
                continue;
            }
            let (dr, dc) = (ri - (j / w) as f64, ci - (j % w) as f64);
            let pos = dr * dr + dc * dc;
            let app: f64 = ai
                .iter()
                .zip(&input.appearance[j * d..(j + 1) * d])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            pairwise.add(
                params.w_appearance * libm::exp(-pos * a_scale - app * b_scale)
                    + params.w_smoothness * libm::exp(-pos * g_scale),
            );
        }
    }
    // The kernel is symmetric, so each unordered pair counts twice.
    Ok(Energy {
        unary: unary.value(),
        pairwise: 2.0 * pairwise.value(),
    })
}

/// Neumaier summation; tens of thousands of pair terms otherwise lose
/// several ulps of the total.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if libm::fabs(self.sum) >= libm::fabs(x) {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}
