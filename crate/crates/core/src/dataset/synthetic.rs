//! Hermetic test scenes.
//!
//! The label map is a Voronoi partition of the image around `classes` random
//! seed points, nudged toward equal areas by Lloyd relaxation, so every class
//! occupies one contiguous region. Each class has
//! a smooth prototype spectrum (a base level plus three Gaussian bumps) and
//! every pixel is its class prototype plus i.i.d. Gaussian noise of standard
//! deviation `noise`; larger noise means more spectral overlap between classes.
//!
//! With `twin_classes` set, class 2 reuses class 1's prototype exactly. The two
//! classes then differ only in where they lie, which a purely spectral
//! classifier cannot resolve.

use alloc::vec;
use alloc::vec::Vec;

use super::{DataCube, LabelMap};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub classes: usize,
    /// Standard deviation of per-band pixel noise around the class prototype.
    pub noise: f64,
    /// Classes 1 and 2 share one spectral prototype.
    pub twin_classes: bool,
}

impl SyntheticSpec {
    /// Distinct, well separated class spectra.
    pub fn separable(height: usize, width: usize, bands: usize, classes: usize) -> Self {
        SyntheticSpec {
            height,
            width,
            bands,
            classes,
            noise: 0.0,
            twin_classes: false,
        }
    }

    /// Coordinate-separable preset: classes 1 and 2 are spectral twins.
    pub fn coordinate_separable(height: usize, width: usize, bands: usize, classes: usize) -> Self {
        SyntheticSpec {
            height,
            width,
            bands,
            classes,
            noise: 0.03,
            twin_classes: true,
        }
    }
}

pub fn generate_synthetic(rng: &mut Rng, spec: &SyntheticSpec) -> Result<(DataCube, LabelMap)> {
    let SyntheticSpec {
        height: h,
        width: w,
        bands,
        classes: k,
        noise,
        twin_classes,
    } = *spec;
    if h == 0 || w == 0 || bands == 0 {
        return Err(Error::invalid("synthetic scene dimensions must be at least 1"));
    }
    if k < 2 || k > h * w || k > u16::MAX as usize {
        return Err(Error::invalid("synthetic scene needs 2 <= classes <= pixel count"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid("synthetic noise must be finite and non-negative"));
    }

    let mut seeds: Vec<(f64, f64)> = place_seeds(rng, h, w, k)
        .into_iter()
        .map(|(r, c)| (r as f64, c as f64))
        .collect();
    let mut labels = voronoi(&seeds, h, w);
    // A few Lloyd steps even out the cell areas.
    for _ in 0..LLOYD_STEPS {
        let mut acc = vec![(0.0, 0.0, 0usize); k];
        for (i, &l) in labels.iter().enumerate() {
            let a = &mut acc[l as usize - 1];
            a.0 += (i / w) as f64;
            a.1 += (i % w) as f64;
            a.2 += 1;
        }
        for (seed, &(sr, sc, n)) in seeds.iter_mut().zip(&acc) {
            if n > 0 {
                *seed = (sr / n as f64, sc / n as f64);
            }
        }
        let next = voronoi(&seeds, h, w);
        if (1..=k as u16).any(|c| !next.contains(&c)) {
            break;
        }
        labels = next;
    }

    let mut prototypes: Vec<Vec<f64>> = (0..k).map(|_| prototype(rng, bands)).collect();
    if twin_classes {
        prototypes[1] = prototypes[0].clone();
    }

    let mut values = Vec::with_capacity(h * w * bands);
    for &l in &labels {
        for &p in &prototypes[l as usize - 1] {
            let v = if noise > 0.0 { p + noise * rng.normal() } else { p };
            values.push(v as f32);
        }
    }
    Ok((
        DataCube::new(h, w, bands, values)?,
        LabelMap::with_classes(h, w, labels, k)?,
    ))
}

const LLOYD_STEPS: usize = 4;

fn sq(x: usize) -> usize {
    x * x
}

/// Nearest-seed label for every pixel; ties go to the lower seed index.
fn voronoi(seeds: &[(f64, f64)], h: usize, w: usize) -> Vec<u16> {
    let mut labels = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, &(sr, sc)) in seeds.iter().enumerate() {
                let (dr, dc) = (r as f64 - sr, c as f64 - sc);
                let d = dr * dr + dc * dc;
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            labels.push(best as u16 + 1);
        }
    }
    labels
}

/// Distinct seed pixels, spread out by rejection sampling so no class region
/// collapses to a sliver.
fn place_seeds(rng: &mut Rng, h: usize, w: usize, k: usize) -> Vec<(usize, usize)> {
    let mut min_dist = 0.6 * libm::sqrt((h * w) as f64 / k as f64);
    let mut seeds: Vec<(usize, usize)> = Vec::with_capacity(k);
    let mut attempts = 0;
    while seeds.len() < k {
        let p = (rng.below(h), rng.below(w));
        let ok = seeds.iter().all(|&(r, c)| {
            let d = libm::sqrt((sq(r.abs_diff(p.0)) + sq(c.abs_diff(p.1))) as f64);
            d >= min_dist && (r, c) != p
        });
        if ok {
            seeds.push(p);
        } else {
            attempts += 1;
            if attempts % 200 == 0 {
                min_dist *= 0.8;
            }
        }
    }
    seeds
}

fn prototype(rng: &mut Rng, bands: usize) -> Vec<f64> {
    let base = rng.uniform_range(0.3, 0.7);
    let mut spectrum = vec![base; bands];
    let span = bands as f64;
    for _ in 0..3 {
        let center = rng.uniform_range(0.0, span);
        let width = rng.uniform_range(span / 10.0, span / 4.0).max(1.0);
        let amp = rng.uniform_range(-0.3, 0.3);
        for (b, v) in spectrum.iter_mut().enumerate() {
            let z = (b as f64 - center) / width;
            *v += amp * libm::exp(-0.5 * z * z);
        }
    }
    for v in &mut spectrum {
        *v = v.clamp(0.05, 0.95);
    }
    spectrum
}
