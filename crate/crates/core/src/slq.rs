//! Stochastic Lanczos quadrature estimates of the spectral density.
//!
//! Each probe `v ~ N(0, I/p)` starts a Lanczos run from `v/‖v‖`; the
//! eigenpairs `(ℓ_i, u_i)` of the tridiagonal matrix give Gauss nodes `ℓ_i`
//! with weights `u_{1i}²`. The density is the probe average of
//! `Σ_i u_{1i}² · N(t; ℓ_i, σ²)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::lanczos::{lanczos, DEFAULT_REL_TOL};
use crate::operators::HvpOracle;
use crate::vecspace::{derive_seed, tridiag_eigh, Rng};

/// Gauss quadrature rule from one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRule {
    pub nodes: Vec<f64>,
    /// Normalized weights `u_{1i}²`, summing to one.
    pub weights: Vec<f64>,
    /// `‖v‖²` of the raw probe; `weights · probe_norm_sq` are the
    /// quadrature weights of `vᵀ f(H) v`.
    pub probe_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub sigma2: f64,
    pub probes: usize,
    pub order: usize,
}

impl DensityEstimate {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Two-column `t φ(t)` plot data with a `#` metadata header.
    pub fn to_plot_data(&self) -> String {
        let mut s = format!(
            "# slq density: probes={} order={} sigma2={:e}\n# t phi\n",
            self.probes, self.order, self.sigma2
        );
        for (t, d) in self.grid.iter().zip(&self.density) {
            s.push_str(&format!("{t:.10e} {d:.10e}\n"));
        }
        s
    }
}

/// Uniform grid of `n ≥ 2` points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!("degenerate grid [{lo}, {hi}] with {n} points")));
    }
    let h = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|i| lo + h * i as f64).collect())
}

/// Grid covering every node by five kernel widths on each side.
pub fn auto_grid(rules: &[ProbeRule], sigma2: f64, n: usize) -> Result<Vec<f64>> {
    let nodes = rules.iter().flat_map(|r| r.nodes.iter().copied());
    let (lo, hi) = nodes.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let s = sigma2.sqrt();
    uniform_grid(lo - 5.0 * s, hi + 5.0 * s, n)
}

/// Quadrature rules for probes `0..k`; probe `i` uses seed
/// `derive_seed(seed, [i])`, so runs with different `k` share prefixes.
pub fn probe_rules(oracle: &dyn HvpOracle, m: usize, k: usize, seed: u64) -> Result<Vec<ProbeRule>> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one probe".into()));
    }
    let p = oracle.dim();
    let rules = exec::map_range(k, |i| -> Result<ProbeRule> {
        let mut rng = Rng::new(derive_seed(seed, &[i as u64]));
        let v = rng.gaussian_vector(p, 1.0 / (p as f64).sqrt());
        let norm_sq = v.norm_sq();
        let q1 = v.scaled(1.0 / norm_sq.sqrt());
        let out = lanczos(oracle, &q1, m, DEFAULT_REL_TOL)?;
        let eig = tridiag_eigh(&out.tridiagonal);
        let weights = (0..eig.values.len()).map(|j| eig.vectors[(0, j)].powi(2)).collect();
        Ok(ProbeRule {
            nodes: eig.values,
            weights,
            probe_norm_sq: norm_sq,
        })
    });
    rules.into_iter().collect()
}

#[inline]
fn gaussian_kernel(x: f64, sigma2: f64) -> f64 {
    (-x * x / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
}

/// Probe-averaged smoothed density on `grid`.
pub fn density_from_rules(rules: &[ProbeRule], sigma2: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument("sigma2 must be positive".into()));
    }
    if rules.is_empty() {
        return Err(Error::InvalidArgument("need at least one probe".into()));
    }
    let k = rules.len() as f64;
    Ok(grid
        .iter()
        .map(|&t| {
            let mut acc = 0.0;
            for r in rules {
                for (l, w) in r.nodes.iter().zip(&r.weights) {
                    acc += w * gaussian_kernel(t - l, sigma2);
                }
            }
            acc / k
        })
        .collect())
}

pub fn slq_density(
    oracle: &dyn HvpOracle,
    m: usize,
    k: usize,
    sigma2: f64,
    grid: &[f64],
    seed: u64,
) -> Result<DensityEstimate> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("grid must be strictly increasing with >= 2 points".into()));
    }
    let rules = probe_rules(oracle, m, k, seed)?;
    Ok(DensityEstimate {
        density: density_from_rules(&rules, sigma2, grid)?,
        grid: grid.to_vec(),
        sigma2,
        probes: k,
        order: m,
    })
}

/// Gaussian-smoothed eigenvalue histogram `(1/p) Σ_j N(t; λ_j, σ²)`.
pub fn exact_density(eigenvalues: &[f64], sigma2: f64, grid: &[f64]) -> Vec<f64> {
    let n = eigenvalues.len() as f64;
    grid.iter()
        .map(|&t| eigenvalues.iter().map(|l| gaussian_kernel(t - l, sigma2)).sum::<f64>() / n)
        .collect()
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

pub fn l1_distance(grid: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    trapezoid(grid, &d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub k_values: Vec<usize>,
    pub l1: Vec<f64>,
    pub k_reference: usize,
    /// Least-squares slope of `ln L1` against `ln k` over entries with
    /// non-zero distance.
    pub slope: f64,
}

const MAX_BLOCKS: usize = 10;

/// L1 distance of `k`-probe estimates to a `10·max(k)`-probe reference for
/// each `k`. Each entry averages up to ten estimates built from disjoint
/// blocks of the reference probes.
pub fn probe_convergence(
    oracle: &dyn HvpOracle,
    m: usize,
    sigma2: f64,
    grid: &[f64],
    k_values: &[usize],
    seed: u64,
) -> Result<ConvergenceTable> {
    if k_values.is_empty() || k_values.windows(2).any(|w| w[1] <= w[0]) || k_values[0] == 0 {
        return Err(Error::InvalidArgument("k values must be positive and increasing".into()));
    }
    let k_ref = 10 * k_values.last().unwrap();
    convergence_against(oracle, m, sigma2, grid, k_values, k_ref, seed)
}

pub fn convergence_against(
    oracle: &dyn HvpOracle,
    m: usize,
    sigma2: f64,
    grid: &[f64],
    k_values: &[usize],
    k_ref: usize,
    seed: u64,
) -> Result<ConvergenceTable> {
    let rules = probe_rules(oracle, m, k_ref, seed)?;
    let reference = density_from_rules(&rules, sigma2, grid)?;
    let mut l1 = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let k = k.min(k_ref);
        // average over disjoint probe blocks of the reference pool
        let blocks = (k_ref / k).min(MAX_BLOCKS);
        let mut total = 0.0;
        for b in 0..blocks {
            let est = density_from_rules(&rules[b * k..(b + 1) * k], sigma2, grid)?;
            total += l1_distance(grid, &est, &reference);
        }
        l1.push(total / blocks as f64);
    }
    let pts: Vec<(f64, f64)> = k_values
        .iter()
        .zip(&l1)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&k, &d)| ((k as f64).ln(), d.ln()))
        .collect();
    Ok(ConvergenceTable {
        k_values: k_values.to_vec(),
        l1,
        k_reference: k_ref,
        slope: least_squares_slope(&pts),
    })
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
