use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Reduction order for inner products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Summation {
    /// Strict left-to-right accumulation.
    #[default]
    Sequential,
    /// Recursive halving; lower rounding error, different bits.
    Pairwise,
}

/// A flat parameter-space vector of fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    data: Vec<f64>,
}

impl ParamVector {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { data: vec![0.0; dim] }
    }

    /// Coordinate basis vector `e_index`.
    pub fn unit(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[index] = 1.0;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        dot(self, other)
    }

    pub fn norm_sq(&self) -> f64 {
        dot_slices(&self.data, &self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &ParamVector) -> Result<()> {
        check_dim(self.dim(), x.dim())?;
        axpy_slices(&mut self.data, a, &x.data);
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> ParamVector {
        ParamVector::new(self.data.iter().map(|x| a * x).collect())
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        check_dim(self.dim(), other.dim())?;
        Ok(ParamVector::new(
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        check_dim(self.dim(), other.dim())?;
        Ok(ParamVector::new(
            self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Returns `self / ‖self‖`, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<ParamVector> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(self.scaled(1.0 / n))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Bitwise equality (distinguishes `0.0` from `-0.0`, equates identical NaNs).
    pub fn bit_eq(&self, other: &ParamVector) -> bool {
        self.dim() == other.dim()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn dot_with(&self, other: &ParamVector, mode: Summation) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(match mode {
            Summation::Sequential => dot_slices(&self.data, &other.data),
            Summation::Pairwise => pairwise_dot(&self.data, &other.data),
        })
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(data: Vec<f64>) -> Self {
        Self::new(data)
    }
}

/// Inner product with sequential left-to-right summation.
pub fn dot(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(dot_slices(&a.data, &b.data))
}

#[inline]
pub fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub(crate) fn axpy_slices(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if a.len() <= LEAF {
        return dot_slices(a, b);
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

const REORTH_THRESHOLD: f64 = 1e-10;

/// Removes the components of `z` along an orthonormal `basis` with classical
/// Gram–Schmidt. A second pass runs when any inner product still exceeds
/// 1e-10 after the first.
pub fn gram_schmidt_residual(z: &ParamVector, basis: &[ParamVector]) -> Result<ParamVector> {
    Ok(gram_schmidt_residual_counted(z, basis)?.0)
}

/// As [`gram_schmidt_residual`], also returning the number of passes taken.
pub fn gram_schmidt_residual_counted(
    z: &ParamVector,
    basis: &[ParamVector],
) -> Result<(ParamVector, usize)> {
    for q in basis {
        check_dim(z.dim(), q.dim())?;
    }
    let mut r = z.clone();
    if basis.is_empty() {
        return Ok((r, 0));
    }
    let mut passes = 0;
    loop {
        // classical: all coefficients against the same vector
        let coeffs: Vec<f64> = basis.iter().map(|q| dot_slices(&q.data, &r.data)).collect();
        for (q, c) in basis.iter().zip(&coeffs) {
            axpy_slices(&mut r.data, -c, &q.data);
        }
        passes += 1;
        if passes >= 2 || max_abs_inner(&r, basis) <= REORTH_THRESHOLD {
            break;
        }
    }
    Ok((r, passes))
}

/// `max_i |q_iᵀ z|`.
pub fn max_abs_inner(z: &ParamVector, basis: &[ParamVector]) -> f64 {
    basis
        .iter()
        .map(|q| dot_slices(&q.data, &z.data).abs())
        .fold(0.0, f64::max)
}

/// Thin QR of a set of vectors by two-pass Gram–Schmidt. Vectors whose
/// residual norm falls below `drop_tol` times their original norm are
/// reported as rank deficient.
pub fn orthonormalize(vectors: &[ParamVector], drop_tol: f64) -> Result<Vec<ParamVector>> {
    let mut out: Vec<ParamVector> = Vec::with_capacity(vectors.len());
    for v in vectors {
        if let Some(first) = out.first() {
            check_dim(first.dim(), v.dim())?;
        }
        let original = v.norm();
        let (r, _) = gram_schmidt_residual_counted(v, &out)?;
        let n = r.norm();
        if original == 0.0 || n <= drop_tol * original {
            return Err(Error::NotOrthonormal(n / original.max(f64::MIN_POSITIVE)));
        }
        out.push(r.scaled(1.0 / n));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecspace::Rng;
    use proptest::prelude::*;

    #[test]
    fn dot_examples() {
        let a = ParamVector::new(vec![1.0, 2.0, 3.0]);
        let b = ParamVector::new(vec![4.0, 5.0, 6.0]);
        assert_eq!(dot(&a, &b).unwrap(), 32.0);
        assert_eq!(dot(&ParamVector::unit(3, 0), &ParamVector::unit(3, 1)).unwrap(), 0.0);
        let v = ParamVector::new(vec![3.0, 4.0]);
        assert_eq!(dot(&v, &v).unwrap(), 25.0);
    }

    #[test]
    fn dot_dimension_mismatch() {
        let a = ParamVector::zeros(3);
        let b = ParamVector::zeros(4);
        assert!(matches!(
            dot(&a, &b),
            Err(Error::DimensionMismatch { expected: 3, got: 4 })
        ));
    }

    #[test]
    fn dot_is_sequential_by_default() {
        // Cancellation makes the reduction order visible.
        let a = ParamVector::new(vec![1e16, 1.0, -1e16, 1.0]);
        let ones = ParamVector::new(vec![1.0; 4]);
        let expected: f64 = ((1e16 + 1.0) + -1e16) + 1.0;
        assert_eq!(dot(&a, &ones).unwrap().to_bits(), expected.to_bits());
        assert_eq!(
            a.dot_with(&ones, Summation::Sequential).unwrap().to_bits(),
            expected.to_bits()
        );
    }

    #[test]
    fn gram_schmidt_examples() {
        let e1 = ParamVector::unit(3, 0);
        let r = gram_schmidt_residual(&e1, std::slice::from_ref(&e1)).unwrap();
        assert_eq!(r.norm(), 0.0);

        let z = ParamVector::new(vec![1.0, 1.0, 0.0]);
        let r = gram_schmidt_residual(&z, &[e1]).unwrap();
        assert_eq!(r.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn gram_schmidt_random_five_basis() {
        let mut rng = Rng::new(11);
        let raw: Vec<_> = (0..5).map(|_| rng.gaussian_vector(20, 1.0)).collect();
        let basis = orthonormalize(&raw, 1e-12).unwrap();
        let z = rng.gaussian_vector(20, 1.0);
        let r = gram_schmidt_residual(&z, &basis).unwrap();
        for q in &basis {
            assert!(q.dot(&r).unwrap().abs() <= 1e-10);
        }
    }

    #[test]
    fn gram_schmidt_thousand_trials() {
        let mut rng = Rng::new(2024);
        let mut worst: f64 = 0.0;
        for trial in 0..1000 {
            let dim = 2 + (rng.below(511) as usize);
            let k = 1 + (rng.below(dim.min(12) as u64) as usize);
            let raw: Vec<_> = (0..k).map(|_| rng.gaussian_vector(dim, 1.0)).collect();
            let basis = orthonormalize(&raw, 1e-10).unwrap();
            // scale spread exercises the second pass
            let z = rng.gaussian_vector(dim, 10f64.powi(trial % 7 - 3));
            let r = gram_schmidt_residual(&z, &basis).unwrap();
            worst = worst.max(max_abs_inner(&r, &basis));
        }
        assert!(worst <= 1e-10, "worst inner product {worst:e}");
    }

    #[test]
    fn orthonormalize_rejects_dependent_vectors() {
        let a = ParamVector::new(vec![1.0, 2.0, 3.0]);
        let b = a.scaled(2.0);
        assert!(matches!(orthonormalize(&[a, b], 1e-8), Err(Error::NotOrthonormal(_))));
    }

    proptest! {
        #[test]
        fn dot_symmetric_and_bilinear(
            a in proptest::collection::vec(-4i32..=4, 5),
            b in proptest::collection::vec(-4i32..=4, 5),
            c in proptest::collection::vec(-4i32..=4, 5),
            s in -3i32..=3,
        ) {
            // small integers keep every product and sum exact
            let to = |v: &Vec<i32>| ParamVector::new(v.iter().map(|&x| x as f64).collect());
            let (a, b, c) = (to(&a), to(&b), to(&c));
            let s = s as f64;
            prop_assert_eq!(dot(&a, &b).unwrap(), dot(&b, &a).unwrap());
            let lhs = dot(&a.scaled(s).add(&c).unwrap(), &b).unwrap();
            let rhs = s * dot(&a, &b).unwrap() + dot(&c, &b).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
