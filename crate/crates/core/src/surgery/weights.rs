//! Class-error weights and the exponent rule.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    /// Exponent on the class error; `None` picks one with [`recommend_p`].
    #[serde(default)]
    pub p_exponent: Option<f64>,
    #[serde(default = "default_target")]
    pub target: Target,
    /// Classes above this accuracy are protected.
    #[serde(default = "default_threshold")]
    pub protect_threshold: f64,
    /// Smallest predicted change allowed on protected classes.
    #[serde(default = "default_floor")]
    pub protect_floor: f64,
}

fn default_target() -> Target {
    Target::MinSigma
}
fn default_threshold() -> f64 {
    0.85
}
fn default_floor() -> f64 {
    -0.01
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            p_exponent: None,
            target: default_target(),
            protect_threshold: default_threshold(),
            protect_floor: default_floor(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    MinSigma,
    MaxWorst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
    /// Every class is already perfect, so the weights fell back to uniform.
    pub perfect: bool,
}

/// `w_j = e_j^p / Σ e_k^p` with `e_j = 1 − a_j` and `0⁰ = 1`.
pub fn class_weights(accuracies: &[f64], p: f64) -> ClassWeights {
    let c = accuracies.len();
    let uniform = vec![1.0 / c as f64; c];
    let raised: Vec<f64> = accuracies
        .iter()
        .map(|a| {
            let e = (1.0 - a).max(0.0);
            if p == 0.0 {
                1.0
            } else {
                e.powf(p)
            }
        })
        .collect();
    let total: f64 = raised.iter().sum();
    if total == 0.0 {
        log::warn!("class_weights: every class has zero error, using uniform weights");
        return ClassWeights {
            weights: uniform,
            perfect: true,
        };
    }
    ClassWeights {
        weights: raised.iter().map(|r| r / total).collect(),
        perfect: false,
    }
}

/// Error ratio at or above which the imbalance counts as severe.
pub const SEVERE_RATIO: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub p: f64,
    /// `e_max / e_min` over classes with nonzero error.
    pub ratio: Option<f64>,
    pub fallback: bool,
}

pub fn recommend_p(accuracies: &[f64], target: Target) -> Recommendation {
    let errors: Vec<f64> = accuracies.iter().map(|a| 1.0 - a).filter(|&e| e > 0.0).collect();
    if errors.len() < 2 {
        log::warn!("recommend_p: fewer than two classes with nonzero error, using p = 1");
        return Recommendation {
            p: 1.0,
            ratio: None,
            fallback: true,
        };
    }
    let max = errors.iter().copied().fold(f64::MIN, f64::max);
    let min = errors.iter().copied().fold(f64::MAX, f64::min);
    let ratio = max / min;
    let severe = ratio >= SEVERE_RATIO;
    let p = match (target, severe) {
        (Target::MinSigma, false) => 2.0,
        (Target::MinSigma, true) => 0.5,
        (Target::MaxWorst, false) => 1.0,
        (Target::MaxWorst, true) => 0.0,
    };
    Recommendation {
        p,
        ratio: Some(ratio),
        fallback: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn weight_examples() {
        assert!(close(&class_weights(&[0.9, 1.0, 0.3], 0.0).weights, &[1.0 / 3.0; 3]));
        assert!(close(&class_weights(&[0.8, 0.9], 1.0).weights, &[2.0 / 3.0, 1.0 / 3.0]));
        assert!(close(&class_weights(&[0.8, 0.9], 2.0).weights, &[0.8, 0.2]));
        let w = class_weights(&[1.0, 1.0], 2.0);
        assert!(w.perfect);
        assert!(close(&w.weights, &[0.5, 0.5]));
    }

    #[test]
    fn exponent_rule() {
        // error ratio 4.4
        let mild = [1.0 - 0.044, 1.0 - 0.01, 0.97];
        assert_eq!(recommend_p(&mild, Target::MinSigma).p, 2.0);
        assert_eq!(recommend_p(&mild, Target::MaxWorst).p, 1.0);
        let severe = [1.0 - 0.64, 1.0 - 0.1];
        assert_eq!(recommend_p(&severe, Target::MinSigma).p, 0.5);
        assert_eq!(recommend_p(&severe, Target::MaxWorst).p, 0.0);
        // errors 0.625 and 0.125: ratio exactly 5
        let r = recommend_p(&[0.375, 0.875], Target::MinSigma);
        assert_eq!(r.ratio, Some(5.0));
        assert_eq!(r.p, 0.5);
        assert!(recommend_p(&[1.0, 0.9], Target::MinSigma).fallback);
    }

    proptest::proptest! {
        #[test]
        fn weights_are_a_distribution(acc in proptest::collection::vec(0.0f64..=1.0, 2..12), p in 0.0f64..4.0) {
            let w = class_weights(&acc, p).weights;
            proptest::prop_assert!(w.iter().all(|&x| x >= 0.0));
            proptest::prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
