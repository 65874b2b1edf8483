//! Constrained coefficient solver.
//!
//! Maximizes `cᵀα` with `c = S w` over a ball or box intersected with the
//! protection half-spaces `s_jᵀα ≥ floor`. Projected gradient ascent with
//! a Dykstra projection onto the intersection, followed by an exact
//! feasibility pull toward a feasible anchor.

use serde::{Deserialize, Serialize};

use super::weights::WeightConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    GlobalL2,
    PerSpikeBox,
}

/// Feasible region for the coefficients before protection constraints.
#[derive(Debug, Clone, PartialEq)]
pub enum Budget {
    Ball { radius: f64 },
    Box { bounds: Vec<f64> },
}

impl Budget {
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            Budget::Ball { radius } if !(*radius >= 0.0) || !radius.is_finite() => {
                Err(Error::InvalidArgument("budget radius must be finite and >= 0".into()))
            }
            Budget::Box { bounds } if bounds.len() != k => Err(Error::DimensionMismatch {
                expected: k,
                got: bounds.len(),
            }),
            Budget::Box { bounds } if bounds.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) => {
                Err(Error::InvalidArgument("box bounds must be finite and >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    fn scale(&self) -> f64 {
        match self {
            Budget::Ball { radius } => *radius,
            Budget::Box { bounds } => bounds.iter().copied().fold(0.0, f64::max),
        }
    }

    fn project(&self, z: &mut [f64]) {
        match self {
            Budget::Ball { radius } => {
                let n = norm(z);
                if n > *radius {
                    let s = radius / n;
                    z.iter_mut().for_each(|x| *x *= s);
                }
            }
            Budget::Box { bounds } => {
                for (x, b) in z.iter_mut().zip(bounds) {
                    *x = x.clamp(-b, *b);
                }
            }
        }
    }

    fn shrunk(&self, factor: f64) -> Budget {
        match self {
            Budget::Ball { radius } => Budget::Ball { radius: radius * factor },
            Budget::Box { bounds } => Budget::Box {
                bounds: bounds.iter().map(|b| b * factor).collect(),
            },
        }
    }

    pub fn contains(&self, alpha: &[f64]) -> bool {
        match self {
            Budget::Ball { radius } => norm(alpha) <= *radius,
            Budget::Box { bounds } => alpha.iter().zip(bounds).all(|(a, b)| a.abs() <= *b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeBounds {
    pub bounds: Vec<f64>,
    /// Spikes with non-positive eigenvalue; their bound is 0.
    pub excluded: Vec<usize>,
}

/// `bound_i = α_max·√(λ_min/λ_i)` with `λ_min` the smallest positive
/// eigenvalue. Non-positive eigenvalues get bound 0.
pub fn per_spike_bounds(eigenvalues: &[f64], alpha_max: f64) -> SpikeBounds {
    let lmin = eigenvalues
        .iter()
        .copied()
        .filter(|&l| l > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut excluded = Vec::new();
    let bounds = eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if l > 0.0 {
                if l == lmin {
                    alpha_max
                } else {
                    alpha_max * (lmin / l).sqrt()
                }
            } else {
                log::warn!("per_spike_bounds: eigenvalue {i} = {l} is not positive, spike excluded");
                excluded.push(i);
                0.0
            }
        })
        .collect();
    SpikeBounds { bounds, excluded }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub alpha: Vec<f64>,
    /// `(S w)ᵀα`.
    pub objective: f64,
    /// `Sᵀα`.
    pub predicted: Vec<f64>,
    /// Classes whose protection constraint was imposed.
    pub protected: Vec<usize>,
    pub infeasible: bool,
    pub iterations: usize,
}

pub const MAX_ITERATIONS: usize = 1000;
const MAX_CYCLES: usize = 500;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Sᵀα`, accumulated row by row.
pub fn predict(s: &[Vec<f64>], classes: usize, alpha: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; classes];
    for (row, a) in s.iter().zip(alpha) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v * a;
        }
    }
    out
}

struct Problem<'a> {
    s: &'a [Vec<f64>],
    classes: usize,
    budget: &'a Budget,
    /// Column `j` of `S` for each protected class.
    halfspaces: Vec<Vec<f64>>,
    floor: f64,
    protected: Vec<usize>,
}

impl Problem<'_> {
    fn feasible(&self, alpha: &[f64]) -> bool {
        if !self.budget.contains(alpha) {
            return false;
        }
        let pred = predict(self.s, self.classes, alpha);
        self.protected.iter().all(|&j| pred[j] >= self.floor)
    }

    fn project(&self, y: &[f64]) -> Vec<f64> {
        let k = y.len();
        let sets = 1 + self.halfspaces.len();
        let mut x = y.to_vec();
        let mut incr = vec![vec![0.0; k]; sets];
        let mut z = vec![0.0; k];
        for _ in 0..MAX_CYCLES {
            let mut change = 0.0;
            for (set, inc) in incr.iter_mut().enumerate() {
                for i in 0..k {
                    z[i] = x[i] + inc[i];
                }
                let mut px = z.clone();
                if set == 0 {
                    self.budget.project(&mut px);
                } else {
                    let a = &self.halfspaces[set - 1];
                    let aa = dot(a, a);
                    let az = dot(a, &z);
                    if aa > 0.0 && az < self.floor {
                        let t = (self.floor - az) / aa;
                        for i in 0..k {
                            px[i] += t * a[i];
                        }
                    }
                }
                for i in 0..k {
                    inc[i] = z[i] - px[i];
                    change += (px[i] - x[i]) * (px[i] - x[i]);
                }
                x = px;
            }
            if change <= 1e-32 * (1.0 + dot(&x, &x)) {
                break;
            }
        }
        x
    }

    /// Largest step from `anchor` toward `target` that is exactly feasible.
    fn pull_feasible(&self, anchor: &[f64], target: &[f64]) -> Option<Vec<f64>> {
        let at = |t: f64| -> Vec<f64> { anchor.iter().zip(target).map(|(a, x)| a + t * (x - a)).collect() };
        if self.feasible(target) {
            return Some(target.to_vec());
        }
        if !self.feasible(anchor) {
            return None;
        }
        // bisection on t; the feasible set is convex so feasibility is an interval [0, t*]
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.feasible(&at(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(at(lo))
    }
}

/// Solves for the Surgery coefficients.
///
/// `s` is `K × C` (row per basis vector). A class `j` is protected when
/// `accuracies[j] > protect.protect_threshold`.
pub fn solve_coefficients(
    s: &[Vec<f64>],
    accuracies: &[f64],
    weights: &[f64],
    budget: &Budget,
    protect: &WeightConfig,
) -> Result<Solution> {
    let k = s.len();
    let classes = accuracies.len();
    if weights.len() != classes {
        return Err(Error::DimensionMismatch {
            expected: classes,
            got: weights.len(),
        });
    }
    for row in s {
        crate::error::check_dim(classes, row.len())?;
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("sensitivity matrix must be finite".into()));
        }
    }
    budget.validate(k)?;

    let protected: Vec<usize> = (0..classes)
        .filter(|&j| accuracies[j] > protect.protect_threshold)
        .collect();
    let problem = Problem {
        s,
        classes,
        budget,
        halfspaces: protected
            .iter()
            .map(|&j| s.iter().map(|row| row[j]).collect())
            .collect(),
        floor: protect.protect_floor,
        protected: protected.clone(),
    };
    let c: Vec<f64> = s.iter().map(|row| dot(row, weights)).collect();
    let finish = |alpha: Vec<f64>, infeasible: bool, iterations: usize| Solution {
        objective: dot(&c, &alpha),
        predicted: predict(s, classes, &alpha),
        alpha,
        protected: protected.clone(),
        infeasible,
        iterations,
    };

    let zero = vec![0.0; k];
    let anchor = if problem.feasible(&zero) {
        zero.clone()
    } else {
        // project onto a slightly tightened region so the anchor is strictly inside
        let tight_budget = budget.shrunk(1.0 - 1e-9);
        let tightened = Problem {
            budget: &tight_budget,
            halfspaces: problem.halfspaces.clone(),
            floor: problem.floor + 1e-9 * (1.0 + problem.floor.abs()),
            protected: problem.protected.clone(),
            ..problem
        };
        let candidate = tightened.project(&zero);
        match problem.pull_feasible(&candidate, &candidate) {
            Some(a) => a,
            None => {
                log::warn!("solve_coefficients: protection constraints are infeasible, returning zero");
                return Ok(finish(zero, true, 0));
            }
        }
    };

    let cn = norm(&c);
    let scale = budget.scale();
    if cn == 0.0 || scale == 0.0 {
        return Ok(finish(anchor, false, 0));
    }
    let eta = 10.0 * scale / cn;
    let mut alpha = anchor.clone();
    let mut iterations = 0;
    for it in 0..MAX_ITERATIONS {
        let step: Vec<f64> = alpha.iter().zip(&c).map(|(a, g)| a + eta * g).collect();
        let next = problem.project(&step);
        let moved = next.iter().zip(&alpha).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        alpha = next;
        iterations = it + 1;
        if moved <= 1e-14 * scale {
            break;
        }
    }
    let alpha = problem
        .pull_feasible(&anchor, &alpha)
        .expect("anchor is feasible");
    let alpha = if dot(&c, &alpha) < dot(&c, &anchor) { anchor } else { alpha };
    Ok(finish(alpha, false, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecspace::Rng;

    fn protect_all(threshold: f64) -> WeightConfig {
        WeightConfig {
            protect_threshold: threshold,
            ..WeightConfig::default()
        }
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let s = vec![vec![0.0; 3]; 2];
        let sol = solve_coefficients(&s, &[0.5; 3], &[1.0 / 3.0; 3], &Budget::Ball { radius: 1.0 }, &WeightConfig::default()).unwrap();
        assert_eq!(sol.alpha, vec![0.0, 0.0]);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn single_direction_hits_the_budget() {
        let sol = solve_coefficients(&[vec![2.5]], &[0.3], &[1.0], &Budget::Ball { radius: 0.7 }, &WeightConfig::default()).unwrap();
        assert!((sol.alpha[0] - 0.7).abs() < 1e-12);
        assert!(sol.alpha[0] <= 0.7);
    }

    #[test]
    fn box_mode_takes_corners_without_protection() {
        let s = vec![vec![1.0, -2.0], vec![-3.0, 0.5]];
        let w = [0.5, 0.5];
        let bounds = vec![0.2, 0.1];
        let sol = solve_coefficients(&s, &[0.3, 0.4], &w, &Budget::Box { bounds }, &WeightConfig::default()).unwrap();
        // c = [-0.5, -1.25]
        assert!((sol.alpha[0] + 0.2).abs() < 1e-12 && (sol.alpha[1] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn protection_is_respected() {
        // pushing class 0 up drags protected class 1 down
        let s = vec![vec![1.0, -1.0]];
        let sol = solve_coefficients(&s, &[0.5, 0.95], &[0.9, 0.1], &Budget::Ball { radius: 1.0 }, &WeightConfig::default()).unwrap();
        assert_eq!(sol.protected, vec![1]);
        assert!(sol.predicted[1] >= -0.01);
        assert!((sol.alpha[0] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn infeasible_protection_returns_zero() {
        let cfg = WeightConfig {
            protect_floor: 0.5,
            ..protect_all(0.0)
        };
        let s = vec![vec![1.0, -1.0]];
        let sol = solve_coefficients(&s, &[0.9, 0.9], &[0.5, 0.5], &Budget::Ball { radius: 1.0 }, &cfg).unwrap();
        assert!(sol.infeasible);
        assert_eq!(sol.alpha, vec![0.0]);
    }

    #[test]
    fn positive_floor_uses_a_feasible_anchor() {
        let cfg = WeightConfig {
            protect_floor: 0.1,
            ..protect_all(0.0)
        };
        let s = vec![vec![1.0, 1.0], vec![0.0, 1.0]];
        let sol = solve_coefficients(&s, &[0.9, 0.9], &[0.5, 0.5], &Budget::Ball { radius: 1.0 }, &cfg).unwrap();
        assert!(!sol.infeasible);
        assert!(sol.predicted.iter().all(|&p| p >= 0.1));
        assert!(norm(&sol.alpha) <= 1.0);
    }

    #[test]
    fn flipping_a_row_flips_its_coefficient() {
        let mut rng = Rng::new(4);
        for _ in 0..20 {
            let s: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.gaussian()).collect()).collect();
            let acc = [0.5, 0.9, 0.7, 0.88];
            let w = [0.4, 0.1, 0.3, 0.2];
            let budget = Budget::Ball { radius: 0.3 };
            let a = solve_coefficients(&s, &acc, &w, &budget, &WeightConfig::default()).unwrap();
            let mut flipped = s.clone();
            flipped[1].iter_mut().for_each(|x| *x = -*x);
            let b = solve_coefficients(&flipped, &acc, &w, &budget, &WeightConfig::default()).unwrap();
            assert_eq!(a.alpha[0], b.alpha[0]);
            assert_eq!(a.alpha[1], -b.alpha[1]);
            assert_eq!(a.alpha[2], b.alpha[2]);
            assert_eq!(a.predicted, b.predicted);
        }
    }

    #[test]
    fn bounds_examples() {
        let b = per_spike_bounds(&[5.0, 20.0, 5.0], 0.4);
        assert_eq!(b.bounds, vec![0.4, 0.2, 0.4]);
        let b = per_spike_bounds(&[600.0, 20.0], 0.03);
        assert!((b.bounds[0] - 0.03 * (20.0f64 / 600.0).sqrt()).abs() < 1e-15);
        assert!((b.bounds[0] - 0.005477).abs() < 1e-6);
        assert_eq!(b.bounds[1], 0.03);
        let b = per_spike_bounds(&[3.0, -1.0], 1.0);
        assert_eq!(b.excluded, vec![1]);
        assert_eq!(b.bounds[1], 0.0);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn output_is_exactly_feasible(
            entries in proptest::collection::vec(-5.0f64..5.0, 12),
            acc in proptest::collection::vec(0.0f64..1.0, 4),
            radius in 0.001f64..3.0,
            boxed in proptest::bool::ANY,
        ) {
            let s: Vec<Vec<f64>> = entries.chunks(4).map(|r| r.to_vec()).collect();
            let w = super::super::weights::class_weights(&acc, 1.0).weights;
            let budget = if boxed {
                Budget::Box { bounds: vec![radius, radius / 2.0, radius / 3.0] }
            } else {
                Budget::Ball { radius }
            };
            let cfg = protect_all(0.5);
            let sol = solve_coefficients(&s, &acc, &w, &budget, &cfg).unwrap();
            proptest::prop_assert!(budget.contains(&sol.alpha));
            for &j in &sol.protected {
                proptest::prop_assert!(sol.predicted[j] >= cfg.protect_floor);
            }
            proptest::prop_assert!(sol.objective >= 0.0);
        }
    }
}
