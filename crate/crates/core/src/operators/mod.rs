//! Matrix-free symmetric operators behind a common Hessian–vector product
//! interface.

mod batches;
mod deflate;
mod dense;
mod model;
mod spiked;

pub use batches::{stratified_batch, uniform_batch};
pub use deflate::{orthonormality_error, Deflated};
pub use dense::DenseOracle;
pub use model::ModelOracle;
pub use spiked::{SpikedOperatorSpec, SpikedOracle};

use crate::error::Result;
use crate::vecspace::{ParamVector, Rng};

/// A symmetric linear operator available only through products.
///
/// Implementations are immutable once built and may be applied from
/// several threads at once.
pub trait HvpOracle: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &ParamVector) -> Result<ParamVector>;
    /// Expected seconds per product, zero when unknown.
    fn cost_hint(&self) -> f64 {
        0.0
    }
    /// Short description recorded in spectrum reports.
    fn provenance(&self) -> String;
}

impl<T: HvpOracle + ?Sized> HvpOracle for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, v: &ParamVector) -> Result<ParamVector> {
        (**self).apply(v)
    }
    fn cost_hint(&self) -> f64 {
        (**self).cost_hint()
    }
    fn provenance(&self) -> String {
        (**self).provenance()
    }
}

/// Worst relative linearity defect `‖H(au+bv) − aHu − bHv‖ / (‖aHu‖ + ‖bHv‖)`
/// over `pairs` random draws.
pub fn linearity_defect(oracle: &dyn HvpOracle, pairs: usize, rng: &mut Rng) -> Result<f64> {
    let p = oracle.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u = rng.gaussian_vector(p, 1.0);
        let v = rng.gaussian_vector(p, 1.0);
        let (a, b) = (rng.gaussian(), rng.gaussian());
        let mut combo = u.scaled(a);
        combo.axpy(b, &v)?;
        let lhs = oracle.apply(&combo)?;
        let hu = oracle.apply(&u)?.scaled(a);
        let hv = oracle.apply(&v)?.scaled(b);
        let scale = hu.norm() + hv.norm();
        if scale == 0.0 {
            worst = worst.max(lhs.norm());
            continue;
        }
        let diff = lhs.sub(&hu)?.sub(&hv)?;
        worst = worst.max(diff.norm() / scale);
    }
    Ok(worst)
}

/// Worst relative symmetry defect `|uᵀHv − vᵀHu| / max(|uᵀHv|, |vᵀHu|)`
/// over `pairs` random draws.
pub fn symmetry_defect(oracle: &dyn HvpOracle, pairs: usize, rng: &mut Rng) -> Result<f64> {
    let p = oracle.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u = rng.gaussian_vector(p, 1.0);
        let v = rng.gaussian_vector(p, 1.0);
        let a = u.dot(&oracle.apply(&v)?)?;
        let b = v.dot(&oracle.apply(&u)?)?;
        let scale = a.abs().max(b.abs());
        if scale > 0.0 {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    Ok(worst)
}
