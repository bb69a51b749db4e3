#![no_std]

//! Dual-branch land-cover classification.
//!
//! A 1D convolutional branch extracts features from each pixel's spectral (or
//! polarimetric) feature vector, a small fully connected branch extracts
//! features from the pixel's normalized image coordinates, and the two
//! 100-wide feature vectors are summed before a softmax head.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! only needs `alloc`. File formats, the experiment pipeline and the command
//! line live in the `geofuse` crate.
//!
//! Module map:
//!
//! - [`numerics`]: tensors, the seeded PRNG, Glorot initialization.
//! - [`dataset`]: cubes, label maps, normalization, coordinate features,
//!   stratified splits and the synthetic scene generator.
//! - [`layers`]: conv1d, max-pool, dense, dropout, softmax cross-entropy with
//!   explicit backward passes.
//! - [`model`]: the dual-branch network and the single-branch baseline.
//! - [`optim`]: Adam and the mini-batch training loop.
//! - [`eval`]: confusion matrices, OA/AA/kappa, class palettes and the dense
//!   CRF energy diagnostic.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod numerics;
pub mod optim;

pub use error::{Error, Result};
