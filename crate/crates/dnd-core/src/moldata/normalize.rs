//! Per-target label standardization fit on the training split only.

use super::{DataError, DataResult, Dataset};

/// Mean and population standard deviation per target, from training labels.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LabelNormalizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl LabelNormalizer {
    /// Fit on the train split. Each target needs at least two non-missing
    /// values and must not be constant.
    pub fn fit(train: &Dataset) -> DataResult<Self> {
        let width = train.label_width().ok_or(DataError::NoLabels)?;
        let mut means = Vec::with_capacity(width);
        let mut stds = Vec::with_capacity(width);
        for t in 0..width {
            let values: Vec<f64> = train
                .iter()
                .filter_map(|r| r.labels.as_ref().and_then(|ls| ls[t]))
                .collect();
            if values.len() < 2 {
                return Err(DataError::InsufficientLabels {
                    target: t,
                    count: values.len(),
                });
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if std <= 0.0 {
                return Err(DataError::ConstantTarget { target: t });
            }
            means.push(mean);
            stds.push(std);
        }
        Ok(LabelNormalizer { means, stds })
    }

    pub fn num_targets(&self) -> usize {
        self.means.len()
    }

    pub fn normalize_value(&self, target: usize, x: f64) -> f64 {
        (x - self.means[target]) / self.stds[target]
    }

    pub fn denormalize_value(&self, target: usize, z: f64) -> f64 {
        z * self.stds[target] + self.means[target]
    }

    /// A transformed copy with every present label standardized.
    pub fn applied(&self, dataset: &Dataset) -> Dataset {
        dataset.map_records(|r| {
            let mut r = r.clone();
            if let Some(ls) = &mut r.labels {
                for (t, slot) in ls.iter_mut().enumerate() {
                    if let Some(v) = slot {
                        *v = self.normalize_value(t, *v);
                    }
                }
            }
            r
        })
    }

    /// Identity transform for already-normalized or classification labels.
    pub fn identity(num_targets: usize) -> Self {
        LabelNormalizer {
            means: vec![0.0; num_targets],
            stds: vec![1.0; num_targets],
        }
    }
}

/// Fit on `train` and return transformed copies of every dataset handed in,
/// in order, alongside the normalizer (val/test are transformed with the
/// train statistics only).
pub fn normalize_labels(
    train: &Dataset,
    apply_to: &[&Dataset],
) -> DataResult<(LabelNormalizer, Vec<Dataset>)> {
    let norm = LabelNormalizer::fit(train)?;
    let transformed = apply_to.iter().map(|d| norm.applied(d)).collect();
    Ok((norm, transformed))
}
