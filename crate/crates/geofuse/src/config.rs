//! JSON experiment configuration. Every hyperparameter has a default, and a
//! written-out config lists all of them.

use std::fs;
use std::path::{Path, PathBuf};

use geofuse_core::dataset::{Rounding, SplitSpec};
use geofuse_core::eval::CrfParams;
use geofuse_core::model::ModelConfig;
use geofuse_core::optim::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// HCUBE file, relative to the config file.
    pub cube: PathBuf,
    /// HLBL file, relative to the config file.
    pub labels: PathBuf,
    pub seed: u64,
    /// Output directory, relative to the config file.
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Also train the spectral-only model for comparison.
    #[serde(default = "yes")]
    pub run_baseline: bool,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub energy: EnergySection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingName {
    Ceil,
    Floor,
    HalfUp,
}

impl From<RoundingName> for Rounding {
    fn from(r: RoundingName) -> Self {
        match r {
            RoundingName::Ceil => Rounding::Ceil,
            RoundingName::Floor => Rounding::Floor,
            RoundingName::HalfUp => Rounding::HalfUp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub fraction: f64,
    pub min_per_class: usize,
    pub rounding: RoundingName,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            fraction: 0.05,
            min_per_class: 2,
            rounding: RoundingName::Ceil,
        }
    }
}

impl SplitSection {
    pub fn spec(&self) -> SplitSpec {
        SplitSpec::new(self.fraction)
            .with_min_per_class(self.min_per_class)
            .with_rounding(self.rounding.into())
    }
}

/// Architecture hyperparameters; band and class counts come from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pool_width: usize,
    pub pool_stride: usize,
    pub dense_width: usize,
    pub coord_hidden: usize,
    pub keep_prob: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::new(1, 2);
        ModelSection {
            filters: d.filters,
            kernel: d.kernel,
            stride: d.stride,
            pool_width: d.pool_width,
            pool_stride: d.pool_stride,
            dense_width: d.dense_width,
            coord_hidden: d.coord_hidden,
            keep_prob: d.keep_prob,
        }
    }
}

impl ModelSection {
    pub fn config(&self, num_bands: usize, num_classes: usize, baseline: bool) -> ModelConfig {
        ModelConfig {
            num_bands,
            num_classes,
            filters: self.filters,
            kernel: self.kernel,
            stride: self.stride,
            pool_width: self.pool_width,
            pool_stride: self.pool_stride,
            dense_width: self.dense_width,
            coord_hidden: self.coord_hidden,
            keep_prob: self.keep_prob,
            baseline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            beta1: d.beta1,
            beta2: d.beta2,
            epsilon: d.epsilon,
            batch_size: d.batch_size,
            max_epochs: d.max_epochs,
        }
    }
}

impl From<TrainSection> for TrainConfig {
    fn from(t: TrainSection) -> Self {
        TrainConfig {
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
        }
    }
}

/// Settings for the energy diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    /// `[row, col, height, width]` of the evaluated window.
    pub crop: [usize; 4],
    /// Bands forming each pixel's appearance vector. Empty picks three
    /// evenly spaced bands.
    pub appearance_bands: Vec<usize>,
    pub w_appearance: f64,
    pub w_smoothness: f64,
    pub theta_alpha: f64,
    pub theta_beta: f64,
    pub theta_gamma: f64,
}

impl Default for EnergySection {
    fn default() -> Self {
        let p = CrfParams::default();
        EnergySection {
            crop: [0, 0, 32, 32],
            appearance_bands: Vec::new(),
            w_appearance: p.w_appearance,
            w_smoothness: p.w_smoothness,
            theta_alpha: p.theta_alpha,
            theta_beta: p.theta_beta,
            theta_gamma: p.theta_gamma,
        }
    }
}

impl EnergySection {
    pub fn params(&self) -> CrfParams {
        CrfParams {
            w_appearance: self.w_appearance,
            w_smoothness: self.w_smoothness,
            theta_alpha: self.theta_alpha,
            theta_beta: self.theta_beta,
            theta_gamma: self.theta_gamma,
        }
    }
}

impl ExperimentConfig {
    /// Config with every default spelled out, pointing at the given data.
    pub fn with_defaults(cube: PathBuf, labels: PathBuf, seed: u64) -> Self {
        ExperimentConfig {
            cube,
            labels,
            seed,
            out_dir: default_out_dir(),
            run_baseline: true,
            split: SplitSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            energy: EnergySection::default(),
        }
    }

    /// Parses a config and resolves its relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.cube, &mut cfg.labels, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate().map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let f = self.split.fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(format!("split.fraction must lie in (0, 1), got {f}"));
        }
        TrainConfig::from(self.train).validate().map_err(|e| e.to_string())?;
        self.model.config(1024, 2, false).validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
