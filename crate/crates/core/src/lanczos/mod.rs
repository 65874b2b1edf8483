//! Lanczos tridiagonalization with full reorthogonalization, Ritz
//! extraction, spike classification and subspace-stability diagnostics.

mod classify;
mod report;
mod stability;

pub use classify::{classify_spikes, count_outliers, median, SpikeLabel, DEFAULT_GAP_FACTOR};
pub use report::SpectrumReport;
pub use stability::{max_weight_assignment, principal_angles, subspace_stability, AngleSummary, StabilityReport};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::operators::{orthonormality_error, HvpOracle};
use crate::vecspace::{
    dot_slices, gram_schmidt_residual, tridiag_eigh, ParamVector, Rng, TridiagonalMatrix,
};

pub const DEFAULT_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LanczosOutput {
    pub tridiagonal: TridiagonalMatrix,
    /// Orthonormal Krylov basis, one vector per tridiagonal row.
    pub basis: Vec<ParamVector>,
    /// True when the recurrence stopped early because the Krylov space
    /// was exhausted.
    pub exhausted: bool,
}

/// Runs at most `m` Lanczos steps from the unit vector `q1`.
///
/// Every new vector is reorthogonalized against the whole basis. The run
/// stops early when `β_j < rel_tol · max(|α|, |β|)` over the steps so far.
pub fn lanczos(oracle: &dyn HvpOracle, q1: &ParamVector, m: usize, rel_tol: f64) -> Result<LanczosOutput> {
    check_dim(oracle.dim(), q1.dim())?;
    if m == 0 {
        return Err(Error::InvalidArgument("Lanczos order must be >= 1".into()));
    }
    if (q1.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "starting vector must be unit norm, got {}",
            q1.norm()
        )));
    }
    let mut basis = vec![q1.clone()];
    let mut alphas = Vec::with_capacity(m);
    let mut betas: Vec<f64> = Vec::with_capacity(m);
    let mut scale: f64 = 0.0;
    let mut exhausted = false;
    for j in 0..m {
        let q = &basis[j];
        let mut w = oracle.apply(q)?;
        let alpha = dot_slices(q.as_slice(), w.as_slice());
        w.axpy(-alpha, q)?;
        if j > 0 {
            w.axpy(-betas[j - 1], &basis[j - 1])?;
        }
        let w = gram_schmidt_residual(&w, &basis)?;
        alphas.push(alpha);
        scale = scale.max(alpha.abs());
        if j + 1 == m {
            break;
        }
        let beta = w.norm();
        if beta < rel_tol * scale.max(beta) || beta == 0.0 {
            exhausted = true;
            break;
        }
        scale = scale.max(beta);
        betas.push(beta);
        basis.push(w.scaled(1.0 / beta));
    }
    let n = alphas.len();
    basis.truncate(n);
    betas.truncate(n.saturating_sub(1));
    Ok(LanczosOutput {
        tridiagonal: TridiagonalMatrix::new(alphas, betas)?,
        basis,
        exhausted,
    })
}

/// Seeded Gaussian starting vector, normalized.
pub fn random_start(dim: usize, seed: u64) -> ParamVector {
    Rng::new(seed).unit_vector(dim)
}

/// Ritz pairs with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeBasis {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<ParamVector>,
    pub source: String,
    /// Largest entry of `|QᵀQ − I|`.
    pub orth_error: f64,
}

impl SpikeBasis {
    pub fn new(eigenvalues: Vec<f64>, vectors: Vec<ParamVector>, source: impl Into<String>) -> Result<Self> {
        check_dim(eigenvalues.len(), vectors.len())?;
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("eigenvalues must be descending".into()));
        }
        let orth_error = orthonormality_error(&vectors);
        Ok(Self {
            eigenvalues,
            vectors,
            source: source.into(),
            orth_error,
        })
    }

    pub fn empty(source: impl Into<String>) -> Self {
        Self {
            eigenvalues: vec![],
            vectors: vec![],
            source: source.into(),
            orth_error: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(|v| v.dim())
    }

    /// First `k` pairs.
    pub fn truncated(&self, k: usize) -> SpikeBasis {
        let k = k.min(self.len());
        SpikeBasis {
            eigenvalues: self.eigenvalues[..k].to_vec(),
            vectors: self.vectors[..k].to_vec(),
            source: self.source.clone(),
            orth_error: orthonormality_error(&self.vectors[..k]),
        }
    }

    /// Same basis with vector `i` negated.
    pub fn with_flipped(&self, i: usize) -> SpikeBasis {
        let mut b = self.clone();
        b.vectors[i] = b.vectors[i].scaled(-1.0);
        b
    }
}

/// Top `top_k` Ritz pairs of a Lanczos run, lifted through the basis and
/// renormalized.
pub fn ritz(out: &LanczosOutput, top_k: usize, source: impl Into<String>) -> Result<SpikeBasis> {
    let m = out.tridiagonal.dim();
    if top_k > m {
        return Err(Error::InvalidArgument(format!(
            "requested {top_k} Ritz pairs from an order-{m} run"
        )));
    }
    let eig = tridiag_eigh(&out.tridiagonal);
    let p = out.basis[0].dim();
    let mut values = Vec::with_capacity(top_k);
    let mut vectors = Vec::with_capacity(top_k);
    for i in 0..top_k {
        let mut v = ParamVector::zeros(p);
        for (j, q) in out.basis.iter().enumerate() {
            v.axpy(eig.vectors[(j, i)], q)?;
        }
        let n = v.norm();
        vectors.push(v.scaled(1.0 / n));
        values.push(eig.values[i]);
    }
    SpikeBasis::new(values, vectors, source)
}

/// Lanczos from a seeded start followed by Ritz extraction.
pub fn top_eigenpairs(oracle: &dyn HvpOracle, m: usize, top_k: usize, seed: u64) -> Result<SpikeBasis> {
    let q1 = random_start(oracle.dim(), seed);
    let out = lanczos(oracle, &q1, m, DEFAULT_REL_TOL)?;
    let k = top_k.min(out.tridiagonal.dim());
    ritz(&out, k, format!("{} | lanczos m={m} seed={seed}", oracle.provenance()))
}
