//! Predicted-versus-measured accuracy response over a sweep of budgets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lanczos::SpikeBasis;
use crate::models::{per_class_accuracy, MlpSpec, Samples};
use crate::sensitivity::SensitivityMatrix;
use crate::surgery::{class_weights, recommend_p, solve_coefficients, Budget, WeightConfig};
use crate::vecspace::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_points")]
    pub points: usize,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// Prepend an `α_max = 0` point.
    #[serde(default)]
    pub include_zero: bool,
    #[serde(default)]
    pub weights: WeightConfig,
}

fn default_points() -> usize {
    38
}

/// `n` geometrically spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha_max: f64,
    pub alpha: Vec<f64>,
    pub predicted: Vec<f64>,
    pub measured: Vec<f64>,
    pub alpha_norm: f64,
    pub predicted_norm: f64,
    pub measured_norm: f64,
    pub error_norm: f64,
}

/// `y ≈ c + b·x^d` (or `b·x^d` when `c` is fixed at 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdditiveFit {
    pub c: f64,
    pub b: f64,
    pub d: f64,
    pub r2: f64,
}

impl AdditiveFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.c + self.b * x.powf(self.d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationSweepLog {
    pub points: Vec<SweepPoint>,
    pub additive: Option<AdditiveFit>,
    pub power_law: Option<AdditiveFit>,
    /// Pearson correlation of predicted and measured norms.
    pub correlation: f64,
}

impl LinearizationSweepLog {
    /// Plot data: `‖α‖ ‖pred‖ ‖meas‖ ‖err‖`.
    pub fn to_plot_data(&self) -> String {
        let mut s = String::from("# alpha_norm predicted_norm measured_norm error_norm\n");
        for p in &self.points {
            s.push_str(&format!(
                "{:.8e} {:.8e} {:.8e} {:.8e}\n",
                p.alpha_norm, p.predicted_norm, p.measured_norm, p.error_norm
            ));
        }
        s
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Least squares in `(c, b)` for fixed `d`; returns `(c, b, sse)`.
fn linear_part(x: &[f64], y: &[f64], d: f64, with_intercept: bool) -> (f64, f64, f64) {
    let u: Vec<f64> = x.iter().map(|v| v.powf(d)).collect();
    let (c, b) = if with_intercept {
        let n = x.len() as f64;
        let mu = u.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let suu: f64 = u.iter().map(|a| (a - mu) * (a - mu)).sum();
        let suy: f64 = u.iter().zip(y).map(|(a, b)| (a - mu) * (b - my)).sum();
        let b = if suu > 0.0 { suy / suu } else { 0.0 };
        (my - b * mu, b)
    } else {
        let suu: f64 = u.iter().map(|a| a * a).sum();
        let suy: f64 = u.iter().zip(y).map(|(a, b)| a * b).sum();
        (0.0, if suu > 0.0 { suy / suu } else { 0.0 })
    };
    let sse = u.iter().zip(y).map(|(a, b0)| (c + b * a - b0).powi(2)).sum();
    (c, b, sse)
}

/// Variable projection: scan `d`, solve the linear part exactly, then
/// refine `d` by golden-section search around the best scan point.
fn fit(x: &[f64], y: &[f64], with_intercept: bool) -> Option<AdditiveFit> {
    let keep: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0 && y[i].is_finite()).collect();
    if keep.len() < 3 {
        return None;
    }
    let x: Vec<f64> = keep.iter().map(|&i| x[i]).collect();
    let y: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
    let sse = |d: f64| linear_part(&x, &y, d, with_intercept).2;
    let (lo, hi, steps) = (0.05, 4.0, 400);
    let h = (hi - lo) / steps as f64;
    let best = (0..=steps)
        .map(|i| lo + h * i as f64)
        .min_by(|a, b| sse(*a).total_cmp(&sse(*b)))?;
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let (c1, c2) = (b - g * (b - a), a + g * (b - a));
        if sse(c1) < sse(c2) {
            b = c2;
        } else {
            a = c1;
        }
    }
    let d = 0.5 * (a + b);
    let (c, bb, e) = linear_part(&x, &y, d, with_intercept);
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let r2 = if sst > 0.0 { 1.0 - e / sst } else { 1.0 };
    Some(AdditiveFit { c, b: bb, d, r2 })
}

pub fn fit_additive(x: &[f64], y: &[f64]) -> Option<AdditiveFit> {
    fit(x, y, true)
}

pub fn fit_power_law(x: &[f64], y: &[f64]) -> Option<AdditiveFit> {
    fit(x, y, false)
}

/// One additive fit over the error points of several sweeps.
pub fn pooled_additive_fit(logs: &[LinearizationSweepLog]) -> Option<AdditiveFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = logs
        .iter()
        .flat_map(|l| l.points.iter().map(|p| (p.alpha_norm, p.error_norm)))
        .unzip();
    fit_additive(&xs, &ys)
}

/// Sweep with a caller-supplied measurement `measure(α) = Δacc`.
pub fn linearization_sweep_with(
    s: &[Vec<f64>],
    accuracies: &[f64],
    weights: &WeightConfig,
    grid: &[f64],
    measure: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<LinearizationSweepLog> {
    let p = weights
        .p_exponent
        .unwrap_or_else(|| recommend_p(accuracies, weights.target).p);
    let w = class_weights(accuracies, p).weights;
    let mut points = Vec::with_capacity(grid.len());
    for &alpha_max in grid {
        let sol = solve_coefficients(s, accuracies, &w, &Budget::Ball { radius: alpha_max }, weights)?;
        let measured = measure(&sol.alpha)?;
        if measured.len() != sol.predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: sol.predicted.len(),
                got: measured.len(),
            });
        }
        let err: Vec<f64> = sol.predicted.iter().zip(&measured).map(|(p, m)| p - m).collect();
        points.push(SweepPoint {
            alpha_max,
            alpha_norm: norm(&sol.alpha),
            predicted_norm: norm(&sol.predicted),
            measured_norm: norm(&measured),
            error_norm: norm(&err),
            alpha: sol.alpha,
            predicted: sol.predicted,
            measured,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.alpha_norm).collect();
    let errs: Vec<f64> = points.iter().map(|p| p.error_norm).collect();
    let pred: Vec<f64> = points.iter().map(|p| p.predicted_norm).collect();
    let meas: Vec<f64> = points.iter().map(|p| p.measured_norm).collect();
    let additive = fit_additive(&xs, &errs);
    if additive.is_none() {
        log::warn!("linearization sweep: additive fit did not converge, raw points kept");
    }
    Ok(LinearizationSweepLog {
        additive,
        power_law: fit_power_law(&xs, &errs),
        correlation: pearson(&pred, &meas),
        points,
    })
}

/// Sweep on a model: `S` is computed once by the caller at `θ`; each grid
/// point applies `θ + Σ α_i q_i`, measures on `eval`, and discards the step.
pub fn linearization_sweep(
    spec: &MlpSpec,
    theta: &ParamVector,
    eval: &Samples,
    basis: &SpikeBasis,
    s: &SensitivityMatrix,
    config: &SweepConfig,
) -> Result<LinearizationSweepLog> {
    crate::error::check_dim(basis.len(), s.rows())?;
    let base = per_class_accuracy(spec, theta, eval)?;
    let mut grid = log_grid(config.alpha_lo, config.alpha_hi, config.points);
    if config.include_zero {
        grid.insert(0, 0.0);
    }
    let mut measure = |alpha: &[f64]| -> Result<Vec<f64>> {
        if alpha.iter().all(|&a| a == 0.0) {
            return Ok(vec![0.0; base.classes()]);
        }
        let mut moved = theta.clone();
        for (a, q) in alpha.iter().zip(&basis.vectors) {
            moved.axpy(*a, q)?;
        }
        let acc = per_class_accuracy(spec, &moved, eval)?;
        Ok(acc.per_class.iter().zip(&base.per_class).map(|(a, b)| a - b).collect())
    };
    linearization_sweep_with(&s.values, &base.per_class, &config.weights, &grid, &mut measure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecspace::Rng;

    #[test]
    fn grid_endpoints() {
        let g = log_grid(5e-4, 5.5e-2, 38);
        assert_eq!(g.len(), 38);
        assert!((g[0] - 5e-4).abs() < 1e-15 && (g[37] - 5.5e-2).abs() < 1e-14);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn fit_recovers_planted_curve() {
        let xs = log_grid(1e-3, 1e-1, 38);
        let ys: Vec<f64> = xs.iter().map(|x| 2.5e-3 + 0.94 * x.powf(1.08)).collect();
        let f = fit_additive(&xs, &ys).unwrap();
        assert!((f.d - 1.08).abs() < 1e-4, "{f:?}");
        assert!((f.b - 0.94).abs() < 1e-3 && (f.c - 2.5e-3).abs() < 1e-5);
        assert!(f.r2 > 0.999999);
        let pl = fit_power_law(&xs, &ys).unwrap();
        assert!(pl.r2 < f.r2);
    }

    #[test]
    fn pooled_fit_spans_every_log() {
        let curve = |lo: f64, hi: f64| {
            let points = log_grid(lo, hi, 10)
                .into_iter()
                .map(|x| SweepPoint {
                    alpha_max: x,
                    alpha: vec![x],
                    predicted: vec![],
                    measured: vec![],
                    alpha_norm: x,
                    predicted_norm: 0.0,
                    measured_norm: 0.0,
                    error_norm: 1e-3 + 0.5 * x.powf(0.9),
                })
                .collect();
            LinearizationSweepLog { points, additive: None, power_law: None, correlation: 1.0 }
        };
        let f = pooled_additive_fit(&[curve(1e-3, 1e-2), curve(1e-2, 1e-1)]).unwrap();
        assert!((f.d - 0.9).abs() < 1e-4 && f.r2 > 0.999999, "{f:?}");
        assert!(pooled_additive_fit(&[]).is_none());
    }

    #[test]
    fn zero_budget_point_is_zero() {
        let s = vec![vec![0.5, -0.2], vec![0.1, 0.3]];
        let mut never = |_: &[f64]| -> Result<Vec<f64>> { Ok(vec![0.0, 0.0]) };
        let log = linearization_sweep_with(&s, &[0.6, 0.7], &WeightConfig::default(), &[0.0, 0.1], &mut never).unwrap();
        let p0 = &log.points[0];
        assert_eq!((p0.alpha_norm, p0.predicted_norm, p0.measured_norm), (0.0, 0.0, 0.0));
    }

    #[test]
    fn linear_responder_has_unit_exponent() {
        // measured response M^T alpha with M != S, quantized to 1/2000
        let mut rng = Rng::new(8);
        let s: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.gaussian()).collect()).collect();
        let m: Vec<Vec<f64>> = s.iter().map(|r| r.iter().map(|v| 0.6 * v + 0.05 * rng.gaussian()).collect()).collect();
        let acc = [0.5, 0.6, 0.7, 0.8];
        let q = 2000.0;
        let mut measure = |alpha: &[f64]| -> Result<Vec<f64>> {
            Ok(crate::surgery::predict(&m, 4, alpha).iter().map(|v| (v * q).round() / q).collect())
        };
        let grid = log_grid(5e-3, 0.5, 38);
        let log = linearization_sweep_with(&s, &acc, &WeightConfig::default(), &grid, &mut measure).unwrap();
        for p in &log.points {
            let direct = norm(&crate::surgery::predict(&s, 4, &p.alpha));
            assert_eq!(p.predicted_norm, direct);
        }
        let f = log.additive.unwrap();
        assert!((f.d - 1.0).abs() < 0.05, "{f:?}");
        assert!(f.c.abs() < 2.0 / q, "{f:?}");
        // slope mismatch along the optimal direction
        let a = &log.points.last().unwrap().alpha;
        let dir: Vec<f64> = a.iter().map(|v| v / norm(a)).collect();
        let diff: Vec<f64> = crate::surgery::predict(&s, 4, &dir)
            .iter()
            .zip(crate::surgery::predict(&m, 4, &dir))
            .map(|(x, y)| x - y)
            .collect();
        assert!((f.b - norm(&diff)).abs() < 0.02 * norm(&diff), "{f:?} {}", norm(&diff));
        assert!(log.correlation > 0.99);
    }
}
