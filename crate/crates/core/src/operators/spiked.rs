use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::HvpOracle;
use crate::error::{check_dim, Error, Result};
use crate::vecspace::{ParamVector, Rng};

// keeps the frame independent of a Lanczos start drawn from the same seed
const FRAME_TAG: u64 = 0xf4a3;

/// Synthetic operator `Q diag(spikes, bulk) Qᵀ` with a seeded random
/// orthonormal frame `Q`. The spikes occupy the first columns of the frame;
/// bulk eigenvalues are uniform draws from `[0, bulk_scale]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikedOperatorSpec {
    pub p: usize,
    pub spike_values: Vec<f64>,
    pub bulk_scale: f64,
    pub seed: u64,
}

impl SpikedOperatorSpec {
    /// Eight spikes with the magnitudes of a ResNet-50/CIFAR-10 Hessian
    /// (top values 828.6 … 20.5) over a near-zero bulk.
    pub fn resnet_like(p: usize, seed: u64) -> Self {
        Self {
            p,
            spike_values: vec![828.6, 577.8, 310.7, 243.5, 153.2, 112.5, 58.9, 20.5],
            bulk_scale: 0.03,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpikedOracle {
    spec: SpikedOperatorSpec,
    frame: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl SpikedOracle {
    pub fn new(spec: SpikedOperatorSpec) -> Result<Self> {
        let k = spec.spike_values.len();
        if k >= spec.p {
            return Err(Error::InvalidArgument("spike count must be below p".into()));
        }
        if !(spec.bulk_scale > 0.0) {
            return Err(Error::InvalidArgument("bulk_scale must be positive".into()));
        }
        if spec.spike_values.windows(2).any(|w| w[0] < w[1]) || spec.spike_values.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("spikes must be positive and descending".into()));
        }
        let mut rng = Rng::derived(spec.seed, &[FRAME_TAG]);
        let g = DMatrix::from_fn(spec.p, spec.p, |_, _| rng.gaussian());
        let frame = g.qr().q();
        let mut eigenvalues = spec.spike_values.clone();
        for _ in k..spec.p {
            eigenvalues.push(spec.bulk_scale * rng.uniform());
        }
        Ok(Self {
            spec,
            frame,
            eigenvalues,
        })
    }

    pub fn spec(&self) -> &SpikedOperatorSpec {
        &self.spec
    }

    /// Full spectrum, descending.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut s = self.eigenvalues.clone();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Bulk eigenvalues in draw order.
    pub fn bulk(&self) -> &[f64] {
        &self.eigenvalues[self.spec.spike_values.len()..]
    }

    pub fn bulk_median(&self) -> f64 {
        let mut b = self.bulk().to_vec();
        b.sort_by(f64::total_cmp);
        let n = b.len();
        if n % 2 == 1 {
            b[n / 2]
        } else {
            0.5 * (b[n / 2 - 1] + b[n / 2])
        }
    }

    /// Planted eigenvector of the `i`-th spike.
    pub fn spike_vector(&self, i: usize) -> ParamVector {
        ParamVector::new(self.frame.column(i).iter().copied().collect())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.eigenvalues));
        &self.frame * lambda * self.frame.transpose()
    }
}

impl HvpOracle for SpikedOracle {
    fn dim(&self) -> usize {
        self.spec.p
    }

    fn apply(&self, v: &ParamVector) -> Result<ParamVector> {
        check_dim(self.spec.p, v.dim())?;
        let x = v.as_slice();
        let mut out = vec![0.0; self.spec.p];
        for (i, &lambda) in self.eigenvalues.iter().enumerate() {
            let col = self.frame.column(i);
            let mut c = 0.0;
            for (q, xi) in col.iter().zip(x) {
                c += q * xi;
            }
            let c = lambda * c;
            for (o, q) in out.iter_mut().zip(col.iter()) {
                *o += c * q;
            }
        }
        Ok(ParamVector::new(out))
    }

    fn provenance(&self) -> String {
        format!(
            "spiked p={} spikes={} bulk_scale={} seed={}",
            self.spec.p,
            self.spec.spike_values.len(),
            self.spec.bulk_scale,
            self.spec.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{linearity_defect, symmetry_defect};
    use crate::vecspace::dense_eigh;

    #[test]
    fn dense_expansion_has_planted_spectrum() {
        let o = SpikedOracle::new(SpikedOperatorSpec {
            p: 60,
            spike_values: vec![9.0, 4.0, 2.5],
            bulk_scale: 0.1,
            seed: 3,
        })
        .unwrap();
        let eig = dense_eigh(&o.to_dense()).unwrap();
        for (a, b) in eig.values.iter().zip(o.spectrum()) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn no_spikes_means_bulk_only() {
        let o = SpikedOracle::new(SpikedOperatorSpec {
            p: 50,
            spike_values: vec![],
            bulk_scale: 0.5,
            seed: 1,
        })
        .unwrap();
        assert!(o.spectrum().iter().all(|&l| (0.0..=0.5).contains(&l)));
    }

    #[test]
    fn resnet_like_anisotropy() {
        let o = SpikedOracle::new(SpikedOperatorSpec::resnet_like(200, 7)).unwrap();
        let ratio = 828.6 / o.bulk_median();
        assert!((1e4..=1e5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn apply_matches_dense_and_is_symmetric() {
        let o = SpikedOracle::new(SpikedOperatorSpec::resnet_like(80, 2)).unwrap();
        let mut rng = Rng::new(8);
        let v = rng.gaussian_vector(80, 1.0);
        let dense = o.to_dense() * nalgebra::DVector::from_column_slice(v.as_slice());
        let hv = o.apply(&v).unwrap();
        for (a, b) in hv.as_slice().iter().zip(dense.iter()) {
            assert!((a - b).abs() <= 1e-10 * 828.6);
        }
        assert!(linearity_defect(&o, 20, &mut rng).unwrap() <= 1e-9);
        assert!(symmetry_defect(&o, 20, &mut rng).unwrap() <= 1e-9);
    }

    #[test]
    fn start_vector_with_the_same_seed_is_generic() {
        let o = SpikedOracle::new(SpikedOperatorSpec::resnet_like(120, 0)).unwrap();
        let q = Rng::new(0).unit_vector(120);
        let coords = o.to_dense().symmetric_eigen().eigenvectors.transpose() * nalgebra::DVector::from_column_slice(q.as_slice());
        assert!(coords.amax() < 0.9);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = SpikedOperatorSpec::resnet_like(8, 0);
        assert!(SpikedOracle::new(s.clone()).is_err());
        s.p = 20;
        s.spike_values = vec![1.0, 2.0];
        assert!(SpikedOracle::new(s).is_err());
    }
}
