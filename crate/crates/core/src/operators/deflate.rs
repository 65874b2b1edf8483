use super::HvpOracle;
use crate::error::{check_dim, Error, Result};
use crate::vecspace::{gram_schmidt_residual, orthonormalize, ParamVector};

const ORTH_TOL: f64 = 1e-8;

/// `(I − QQᵀ) H (I − QQᵀ)` for an orthonormal `Q`. Projecting on both
/// sides keeps the operator symmetric.
#[derive(Debug, Clone)]
pub struct Deflated<O> {
    inner: O,
    basis: Vec<ParamVector>,
}

impl<O: HvpOracle> Deflated<O> {
    /// Re-orthonormalizes `basis` by two-pass Gram–Schmidt (thin QR) and
    /// aborts when the result is not orthonormal within 1e-8.
    pub fn new(inner: O, basis: &[ParamVector]) -> Result<Self> {
        for q in basis {
            check_dim(inner.dim(), q.dim())?;
        }
        let basis = orthonormalize(basis, ORTH_TOL)?;
        let err = orthonormality_error(&basis);
        if err > ORTH_TOL {
            return Err(Error::NotOrthonormal(err));
        }
        Ok(Self { inner, basis })
    }

    pub fn basis(&self) -> &[ParamVector] {
        &self.basis
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn project(&self, v: &ParamVector) -> Result<ParamVector> {
        gram_schmidt_residual(v, &self.basis)
    }
}

/// `max |QᵀQ − I|` entrywise.
pub fn orthonormality_error(basis: &[ParamVector]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate().skip(i) {
            let d = crate::vecspace::dot_slices(a.as_slice(), b.as_slice());
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((d - target).abs());
        }
    }
    worst
}

impl<O: HvpOracle> HvpOracle for Deflated<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, v: &ParamVector) -> Result<ParamVector> {
        if self.basis.is_empty() {
            return self.inner.apply(v);
        }
        let w = self.project(v)?;
        let hw = self.inner.apply(&w)?;
        self.project(&hw)
    }

    fn cost_hint(&self) -> f64 {
        self.inner.cost_hint()
    }

    fn provenance(&self) -> String {
        format!("deflated[{}] of {}", self.basis.len(), self.inner.provenance())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{symmetry_defect, DenseOracle, SpikedOperatorSpec, SpikedOracle};
    use crate::vecspace::Rng;

    #[test]
    fn empty_basis_is_transparent() {
        let o = DenseOracle::diagonal(&[5.0, 2.0, 1.0]);
        let d = Deflated::new(&o, &[]).unwrap();
        let v = ParamVector::new(vec![1.0, -1.0, 2.0]);
        assert!(d.apply(&v).unwrap().bit_eq(&o.apply(&v).unwrap()));
    }

    #[test]
    fn basis_directions_are_annihilated() {
        let o = SpikedOracle::new(SpikedOperatorSpec::resnet_like(100, 5)).unwrap();
        let basis: Vec<_> = (0..4).map(|i| o.spike_vector(i)).collect();
        let d = Deflated::new(&o, &basis).unwrap();
        for q in &basis {
            assert!(d.apply(q).unwrap().norm() <= 1e-8);
        }
        let mut rng = Rng::new(1);
        assert!(symmetry_defect(&d, 20, &mut rng).unwrap() <= 1e-9);
    }

    #[test]
    fn nested_deflation_equals_concatenated() {
        let o = SpikedOracle::new(SpikedOperatorSpec::resnet_like(90, 6)).unwrap();
        let a: Vec<_> = (0..3).map(|i| o.spike_vector(i)).collect();
        let b: Vec<_> = (3..6).map(|i| o.spike_vector(i)).collect();
        let nested = Deflated::new(Deflated::new(&o, &a).unwrap(), &b).unwrap();
        let all: Vec<_> = a.iter().chain(&b).cloned().collect();
        let flat = Deflated::new(&o, &all).unwrap();
        let mut rng = Rng::new(2);
        for _ in 0..10 {
            let v = rng.gaussian_vector(90, 1.0);
            let diff = nested.apply(&v).unwrap().sub(&flat.apply(&v).unwrap()).unwrap();
            assert!(diff.norm() <= 1e-8);
        }
    }

    #[test]
    fn dependent_basis_aborts() {
        let o = DenseOracle::identity(3);
        let q = ParamVector::unit(3, 0);
        assert!(Deflated::new(&o, &[q.clone(), q]).is_err());
    }
}
