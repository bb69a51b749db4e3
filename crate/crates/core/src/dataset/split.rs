use alloc::vec;
use alloc::vec::Vec;

use super::LabelMap;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// How the fractional per-class training quota is turned into a count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    /// Round up. Reproduces the per-class training counts of the Indian Pines protocol.
    #[default]
    Ceil,
    /// Round down. Reproduces the per-class training counts of the Flevoland protocol.
    Floor,
    /// Round to nearest, halves up.
    HalfUp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Per-class training fraction in `(0, 1)`.
    pub fraction: f64,
    pub min_per_class: usize,
    pub rounding: Rounding,
}

impl SplitSpec {
    pub fn new(fraction: f64) -> Self {
        SplitSpec {
            fraction,
            min_per_class: 2,
            rounding: Rounding::default(),
        }
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn with_min_per_class(mut self, min: usize) -> Self {
        self.min_per_class = min;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::invalid("split fraction must lie in (0, 1)"));
        }
        if self.min_per_class == 0 {
            return Err(Error::invalid("min_per_class must be at least 1"));
        }
        Ok(())
    }

    /// Training count for a class with `n` labeled pixels:
    /// `clamp(round(fraction * n), min_per_class, n - 1)`.
    pub fn train_count(&self, n: usize) -> usize {
        let quota = self.fraction * n as f64;
        // 0.05 * 1420 is 71.00000000000001 in binary; snap near-integers first.
        let nearest = libm::round(quota);
        let quota = if libm::fabs(quota - nearest) < 1e-9 {
            nearest
        } else {
            quota
        };
        let rounded = match self.rounding {
            Rounding::Ceil => libm::ceil(quota),
            Rounding::Floor => libm::floor(quota),
            Rounding::HalfUp => libm::floor(quota + 0.5),
        } as usize;
        rounded.max(self.min_per_class).min(n.saturating_sub(1))
    }
}

/// Flat pixel indices of a stratified partition, both sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Training pixels per class; index 0 holds class 1.
    pub train_counts: Vec<usize>,
    /// Test pixels per class; index 0 holds class 1.
    pub test_counts: Vec<usize>,
}

/// Per-class random partition of the labeled pixels. Classes are visited in
/// id order; each class's pixels (raster order) are shuffled by `rng` and the
/// first `train_count` go to training, the rest to testing.
pub fn stratified_split(labels: &LabelMap, spec: &SplitSpec, rng: &mut Rng) -> Result<Split> {
    spec.validate()?;
    let k = labels.num_classes();
    if k == 0 {
        return Err(Error::Empty("label map has no labeled pixels"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (flat, &l) in labels.labels().iter().enumerate() {
        if l > 0 {
            by_class[l as usize - 1].push(flat);
        }
    }
    for (c, pixels) in by_class.iter().enumerate() {
        if pixels.len() < spec.min_per_class + 1 {
            return Err(Error::ClassTooSmall {
                class: (c + 1) as u16,
                available: pixels.len(),
                required: spec.min_per_class + 1,
            });
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut train_counts = Vec::with_capacity(k);
    let mut test_counts = Vec::with_capacity(k);
    for mut pixels in by_class {
        let n = spec.train_count(pixels.len());
        rng.shuffle(&mut pixels);
        train.extend_from_slice(&pixels[..n]);
        test.extend_from_slice(&pixels[n..]);
        train_counts.push(n);
        test_counts.push(pixels.len() - n);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        test,
        train_counts,
        test_counts,
    })
}
