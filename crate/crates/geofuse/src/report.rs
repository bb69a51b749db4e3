//! `report.json`. Field names are fixed; accuracies and kappa are written
//! with six decimals so the bytes depend only on the values.

use geofuse_core::eval::EvalReport;
use serde::ser::{Error as _, Serializer};
use serde::Serialize;
use serde_json::value::RawValue;

/// A float serialized with exactly six decimals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed(pub f64);

impl Serialize for Fixed {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom("non-finite value in report"));
        }
        let raw = RawValue::from_string(format!("{:.6}", self.0)).map_err(S::Error::custom)?;
        raw.serialize(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub class: u16,
    pub train: usize,
    pub test: usize,
    /// `null` when the class has no test pixels.
    pub accuracy: Option<Fixed>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelReport {
    pub overall_accuracy: Fixed,
    pub average_accuracy: Fixed,
    pub kappa: Fixed,
    pub train_total: usize,
    pub test_total: u64,
    pub final_loss: Fixed,
    pub parameter_count: usize,
    pub per_class: Vec<ClassReport>,
}

impl ModelReport {
    pub fn new(eval: &EvalReport, train_counts: &[usize], test_counts: &[usize], final_loss: f64, parameter_count: usize) -> Self {
        let per_class = eval
            .per_class
            .iter()
            .enumerate()
            .map(|(i, acc)| ClassReport {
                class: i as u16 + 1,
                train: train_counts[i],
                test: test_counts[i],
                accuracy: acc.map(Fixed),
            })
            .collect();
        ModelReport {
            overall_accuracy: Fixed(eval.overall_accuracy),
            average_accuracy: Fixed(eval.average_accuracy),
            kappa: Fixed(eval.kappa),
            train_total: train_counts.iter().sum(),
            test_total: eval.total,
            final_loss: Fixed(final_loss),
            parameter_count,
            per_class,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub num_classes: usize,
    pub split_fraction: Fixed,
    pub dual_branch: Option<ModelReport>,
    pub baseline: Option<ModelReport>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
