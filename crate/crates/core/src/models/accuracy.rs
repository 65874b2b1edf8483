use serde::{Deserialize, Serialize};

use super::data::Samples;
use super::mlp::{predict, MlpSpec};
use crate::error::{Error, Result};
use crate::vecspace::ParamVector;

/// Per-class and global accuracy on one split.
///
/// Classes absent from the split have `counts[j] == 0`, `per_class[j] == 0`
/// and `defined[j] == false`; they are excluded from `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub per_class: Vec<f64>,
    pub global: f64,
    pub sigma: f64,
    pub counts: Vec<usize>,
    pub correct: Vec<usize>,
    pub defined: Vec<bool>,
}

impl ClassAccuracy {
    pub fn from_predictions(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: predictions.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut counts = vec![0usize; classes];
        let mut correct = vec![0usize; classes];
        for (&p, &y) in predictions.iter().zip(labels) {
            counts[y] += 1;
            if p == y {
                correct[y] += 1;
            }
        }
        Ok(Self::from_counts(correct, counts))
    }

    pub fn from_counts(correct: Vec<usize>, counts: Vec<usize>) -> Self {
        let defined: Vec<bool> = counts.iter().map(|&n| n > 0).collect();
        let per_class: Vec<f64> = correct
            .iter()
            .zip(&counts)
            .map(|(&c, &n)| if n > 0 { c as f64 / n as f64 } else { 0.0 })
            .collect();
        let total: usize = counts.iter().sum();
        let hits: usize = correct.iter().sum();
        let global = if total > 0 { hits as f64 / total as f64 } else { 0.0 };
        let sigma = population_std(
            &per_class
                .iter()
                .zip(&defined)
                .filter(|(_, &d)| d)
                .map(|(&a, _)| a)
                .collect::<Vec<_>>(),
        );
        Self {
            per_class,
            global,
            sigma,
            counts,
            correct,
            defined,
        }
    }

    pub fn classes(&self) -> usize {
        self.per_class.len()
    }

    /// Index of the lowest-accuracy defined class.
    pub fn weakest(&self) -> Option<usize> {
        (0..self.classes())
            .filter(|&j| self.defined[j])
            .min_by(|&a, &b| self.per_class[a].total_cmp(&self.per_class[b]))
    }

    /// Largest per-class accuracy drop from `before` to `self`.
    pub fn max_drop_from(&self, before: &ClassAccuracy) -> f64 {
        self.per_class
            .iter()
            .zip(&before.per_class)
            .map(|(a, b)| b - a)
            .fold(0.0, f64::max)
    }
}

/// Standard deviation dividing by the number of values.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    var.sqrt()
}

pub fn per_class_accuracy(
    spec: &MlpSpec,
    theta: &ParamVector,
    split: &Samples,
) -> Result<ClassAccuracy> {
    if split.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let preds = predict(spec, theta, split)?;
    ClassAccuracy::from_predictions(&preds, split.labels(), spec.classes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier() {
        let labels = vec![0, 1, 2, 3, 1, 2];
        let a = ClassAccuracy::from_predictions(&labels, &labels, 4).unwrap();
        assert_eq!(a.per_class, vec![1.0; 4]);
        assert_eq!(a.sigma, 0.0);
        assert_eq!(a.global, 1.0);
    }

    #[test]
    fn constant_classifier_on_balanced_split() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let a = ClassAccuracy::from_predictions(&vec![0; 40], &labels, 4).unwrap();
        assert_eq!(a.per_class, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(a.global, 0.25);
        assert!((a.sigma - 0.75f64.sqrt() / 2.0 * 1.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_undefined() {
        let a = ClassAccuracy::from_predictions(&[0, 1, 1], &[0, 1, 0], 3).unwrap();
        assert_eq!(a.counts, vec![2, 1, 0]);
        assert!(!a.defined[2]);
        assert!((a.sigma - population_std(&[0.5, 1.0])).abs() < 1e-15);
    }

    #[test]
    fn global_is_correct_over_total() {
        let a = ClassAccuracy::from_counts(vec![3, 5, 1], vec![7, 9, 11]);
        assert_eq!(a.global, 9.0 / 27.0);
        let weighted: f64 = a
            .per_class
            .iter()
            .zip(&a.counts)
            .map(|(p, &n)| p * n as f64)
            .sum::<f64>()
            / 27.0;
        assert!((weighted - a.global).abs() < 1e-15);
    }
}
