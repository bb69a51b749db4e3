//! Feature cubes, ground-truth rasters and the samples drawn from them.

mod split;
mod synthetic;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use split::{stratified_split, Rounding, Split, SplitSpec};
pub use synthetic::{generate_synthetic, SyntheticSpec};

/// `height × width × bands` grid of per-pixel feature vectors, stored
/// pixel-major (row, then column) with bands contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCube {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f32>,
}

impl DataCube {
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::invalid("cube dimensions must be at least 1"));
        }
        let len = height
            .checked_mul(width)
            .and_then(|p| p.checked_mul(bands))
            .ok_or_else(|| Error::invalid("cube dimensions overflow"))?;
        if values.len() != len {
            return Err(Error::DimMismatch {
                context: "cube values",
                expected: len,
                found: values.len(),
            });
        }
        Ok(DataCube {
            height,
            width,
            bands,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Feature vector of pixel `(row, col)`.
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.bands;
        &self.values[start..start + self.bands]
    }

    pub fn pixel_at(&self, flat: usize) -> &[f32] {
        &self.values[flat * self.bands..(flat + 1) * self.bands]
    }

    /// Copy of the sub-image starting at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<DataCube> {
        check_crop(self.height, self.width, row, col, height, width)?;
        let mut values = Vec::with_capacity(height * width * self.bands);
        for r in row..row + height {
            for c in col..col + width {
                values.extend_from_slice(self.pixel(r, c));
            }
        }
        DataCube::new(height, width, self.bands, values)
    }
}

/// Ground-truth raster; label 0 marks unlabeled pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u16>,
    num_classes: usize,
}

impl LabelMap {
    /// Builds a label map whose class count is the largest label present.
    pub fn new(height: usize, width: usize, labels: Vec<u16>) -> Result<Self> {
        let k = labels.iter().copied().max().unwrap_or(0) as usize;
        Self::with_classes(height, width, labels, k)
    }

    pub fn with_classes(
        height: usize,
        width: usize,
        labels: Vec<u16>,
        num_classes: usize,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("label map dimensions must be at least 1"));
        }
        let len = height
            .checked_mul(width)
            .ok_or_else(|| Error::invalid("label map dimensions overflow"))?;
        if labels.len() != len {
            return Err(Error::DimMismatch {
                context: "label map",
                expected: len,
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize > num_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                num_classes,
            });
        }
        Ok(LabelMap {
            height,
            width,
            labels,
            num_classes,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    /// Labeled pixel count per class; index 0 holds class 1.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            if l > 0 {
                counts[l as usize - 1] += 1;
            }
        }
        counts
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }

    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<LabelMap> {
        check_crop(self.height, self.width, row, col, height, width)?;
        let mut labels = Vec::with_capacity(height * width);
        for r in row..row + height {
            labels.extend_from_slice(&self.labels[r * self.width + col..r * self.width + col + width]);
        }
        LabelMap::with_classes(height, width, labels, self.num_classes)
    }
}

fn check_crop(h: usize, w: usize, row: usize, col: usize, ch: usize, cw: usize) -> Result<()> {
    if ch == 0 || cw == 0 || row + ch > h || col + cw > w {
        return Err(Error::invalid("crop window outside the image"));
    }
    Ok(())
}

/// Per-band min-max scaling into `[0, 1]`. Constant bands become all zero.
pub fn normalize_cube(cube: &DataCube) -> Result<DataCube> {
    if !cube.values.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("cube values"));
    }
    let bands = cube.bands;
    let mut lo = vec![f32::INFINITY; bands];
    let mut hi = vec![f32::NEG_INFINITY; bands];
    for px in cube.values.chunks_exact(bands) {
        for (b, &v) in px.iter().enumerate() {
            lo[b] = lo[b].min(v);
            hi[b] = hi[b].max(v);
        }
    }
    let mut values = cube.values.clone();
    for px in values.chunks_exact_mut(bands) {
        for (b, v) in px.iter_mut().enumerate() {
            let range = hi[b] as f64 - lo[b] as f64;
            *v = if range > 0.0 {
                let scaled = ((*v as f64 - lo[b] as f64) / range) as f32;
                scaled.clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }
    DataCube::new(cube.height, cube.width, bands, values)
}

/// Pixel position scaled by image extent: `(row / (H-1), col / (W-1))`, with a
/// zero component along any axis of extent 1.
pub fn coord_features(row: usize, col: usize, height: usize, width: usize) -> Result<[f64; 2]> {
    if row >= height || col >= width {
        return Err(Error::PixelOutOfRange {
            row,
            col,
            height,
            width,
        });
    }
    let scale = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    Ok([scale(row, height), scale(col, width)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub row: usize,
    pub col: usize,
    pub features: Vec<f64>,
    pub coords: [f64; 2],
    /// Class id in `1..=num_classes`.
    pub label: u16,
}

/// Samples with unique pixel positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut seen: Vec<(usize, usize)> = samples.iter().map(|s| (s.row, s.col)).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate pixel in sample set"));
        }
        for s in &samples {
            if s.label == 0 {
                return Err(Error::UnlabeledPixel {
                    row: s.row,
                    col: s.col,
                });
            }
            if !s.coords.iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(Error::invalid("coordinate features must lie in [0, 1]"));
            }
        }
        Ok(SampleSet { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn labels(&self) -> Vec<u16> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

/// Gathers the samples at the given flat pixel indices. The cube is used as
/// is; pass a normalized cube for network inputs.
pub fn extract_samples(cube: &DataCube, labels: &LabelMap, indices: &[usize]) -> Result<SampleSet> {
    if cube.height != labels.height || cube.width != labels.width {
        return Err(Error::DimMismatch {
            context: "cube vs label map pixels",
            expected: cube.pixel_count(),
            found: labels.labels.len(),
        });
    }
    let (h, w) = (cube.height, cube.width);
    let mut samples = Vec::with_capacity(indices.len());
    for &flat in indices {
        let (row, col) = (flat / w, flat % w);
        if row >= h {
            return Err(Error::PixelOutOfRange {
                row,
                col,
                height: h,
                width: w,
            });
        }
        let label = labels.labels[flat];
        if label == 0 {
            return Err(Error::UnlabeledPixel { row, col });
        }
        samples.push(Sample {
            row,
            col,
            features: cube.pixel_at(flat).iter().map(|&v| v as f64).collect(),
            coords: coord_features(row, col, h, w)?,
            label,
        });
    }
    SampleSet::new(samples)
}
