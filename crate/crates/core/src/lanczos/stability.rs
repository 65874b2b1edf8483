use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SpikeBasis;
use crate::error::{Error, Result};
use crate::vecspace::dot_slices;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSummary {
    pub k: usize,
    /// Degrees.
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `|cos|` of each pair in the best one-to-one matching.
    pub matched: Vec<f64>,
    pub matched_mean: f64,
    pub matched_min: f64,
    /// `|cos|` between vectors with the same index.
    pub diagonal: Vec<f64>,
    pub diagonal_mean: f64,
    pub angles: Vec<AngleSummary>,
}

fn abs_cosines(a: &SpikeBasis, b: &SpikeBasis) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        dot_slices(a.vectors[i].as_slice(), b.vectors[j].as_slice())
            .abs()
            .min(1.0)
    })
}

/// Principal angles in degrees between the spans of the first `k` vectors
/// of each basis, from the singular values of `Q_aᵀ Q_b`.
pub fn principal_angles(a: &SpikeBasis, b: &SpikeBasis, k: usize) -> Result<Vec<f64>> {
    if k > a.len() || k > b.len() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds basis size")));
    }
    if k == 0 {
        return Ok(vec![]);
    }
    let m = DMatrix::from_fn(k, k, |i, j| {
        dot_slices(a.vectors[i].as_slice(), b.vectors[j].as_slice())
    });
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv
        .into_iter()
        .map(|s| s.clamp(0.0, 1.0).acos().to_degrees())
        .collect())
}

pub fn subspace_stability(a: &SpikeBasis, b: &SpikeBasis, ks: &[usize]) -> Result<StabilityReport> {
    if a.dim() != b.dim() && !(a.is_empty() || b.is_empty()) {
        return Err(Error::DimensionMismatch {
            expected: a.dim().unwrap_or(0),
            got: b.dim().unwrap_or(0),
        });
    }
    let c = abs_cosines(a, b);
    let assignment = max_weight_assignment(&c);
    let matched: Vec<f64> = assignment.iter().map(|&(i, j)| c[(i, j)]).collect();
    let n_diag = a.len().min(b.len());
    let diagonal: Vec<f64> = (0..n_diag).map(|i| c[(i, i)]).collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let mut angles = Vec::with_capacity(ks.len());
    for &k in ks {
        let th = principal_angles(a, b, k)?;
        angles.push(AngleSummary {
            k,
            max: th.iter().copied().fold(0.0, f64::max),
            mean: mean(&th),
        });
    }
    Ok(StabilityReport {
        matched_mean: mean(&matched),
        matched_min: matched.iter().copied().fold(1.0, f64::min),
        matched,
        diagonal_mean: mean(&diagonal),
        diagonal,
        angles,
    })
}

/// Maximum-weight one-to-one matching of rows to columns (Hungarian
/// method on negated weights). Returns `(row, col)` pairs sorted by row.
pub fn max_weight_assignment(w: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let transpose = w.nrows() > w.ncols();
    let w = if transpose { w.transpose() } else { w.clone() };
    let (n, m) = (w.nrows(), w.ncols());
    if n == 0 {
        return vec![];
    }
    // 1-indexed potentials formulation, rows <= cols
    let cost = |i: usize, j: usize| -w[(i - 1, j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| {
            if transpose {
                (j - 1, p[j] - 1)
            } else {
                (p[j] - 1, j - 1)
            }
        })
        .collect();
    pairs.sort_unstable();
    pairs
}
