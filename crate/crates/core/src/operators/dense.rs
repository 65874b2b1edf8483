use nalgebra::DMatrix;

use super::HvpOracle;
use crate::error::{check_dim, Error, Result};
use crate::vecspace::{max_asymmetry, ParamVector};

pub const MAX_DENSE_DIM: usize = 4096;

/// Explicit symmetric matrix.
#[derive(Debug, Clone)]
pub struct DenseOracle {
    matrix: DMatrix<f64>,
}

impl DenseOracle {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        if matrix.nrows() > MAX_DENSE_DIM {
            return Err(Error::InvalidArgument(format!(
                "dense oracle limited to dimension {MAX_DENSE_DIM}"
            )));
        }
        let asym = max_asymmetry(&matrix);
        if asym > 1e-8 {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self { matrix })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self {
            matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    /// Symmetric matrix with i.i.d. standard normal upper triangle.
    pub fn random_symmetric(dim: usize, rng: &mut crate::vecspace::Rng) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let x = rng.gaussian();
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        Self { matrix: m }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl HvpOracle for DenseOracle {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, v: &ParamVector) -> Result<ParamVector> {
        check_dim(self.dim(), v.dim())?;
        let n = self.dim();
        let x = v.as_slice();
        let out = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    acc += self.matrix[(i, j)] * xj;
                }
                acc
            })
            .collect();
        Ok(ParamVector::new(out))
    }

    fn provenance(&self) -> String {
        format!("dense {}x{}", self.dim(), self.dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{linearity_defect, symmetry_defect};
    use crate::vecspace::Rng;

    #[test]
    fn identity_and_diagonal() {
        let v = ParamVector::new(vec![1.5, -2.0, 0.25]);
        assert_eq!(DenseOracle::identity(3).apply(&v).unwrap(), v);
        let d = DenseOracle::diagonal(&[3.0, 1.0]);
        let out = d.apply(&ParamVector::new(vec![1.0, 1.0])).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 1.0]);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 1.0]);
        assert!(matches!(DenseOracle::new(m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn sampling_checks_pass() {
        let mut rng = Rng::new(4);
        let o = DenseOracle::random_symmetric(40, &mut rng);
        assert!(linearity_defect(&o, 20, &mut rng).unwrap() <= 1e-9);
        assert!(symmetry_defect(&o, 20, &mut rng).unwrap() <= 1e-9);
    }
}
