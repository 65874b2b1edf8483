//! Spike–class sensitivity matrix and its rank diagnostics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::lanczos::SpikeBasis;
use crate::models::{per_class_accuracy, ClassAccuracy, Dataset, MlpSpec, Samples};
use crate::operators::stratified_batch;
use crate::vecspace::{ParamVector, Rng};

/// Central-difference response of per-class accuracy to unit steps along
/// each basis vector: `S[i][j] = (acc_j(θ+εq_i) − acc_j(θ−εq_i)) / 2ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMatrix {
    /// `K × C`, row `i` belongs to basis vector `i`.
    pub values: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub source: String,
    pub split: String,
    pub class_counts: Vec<usize>,
    /// `1 / (2ε · min_j n_j)`: one sample flipping in the smallest class.
    pub noise_floor: f64,
    pub evaluations: usize,
}

impl SensitivityMatrix {
    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows(), self.classes(), |i, j| self.values[i][j])
    }

    /// `Sᵀα`: predicted per-class accuracy change for `δθ = Σ α_i q_i`.
    pub fn predict(&self, alpha: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.classes()];
        for (row, a) in self.values.iter().zip(alpha) {
            for (o, s) in out.iter_mut().zip(row) {
                *o += s * a;
            }
        }
        out
    }

    /// Copy with entries below the noise floor set to zero.
    pub fn floored(&self) -> SensitivityMatrix {
        let mut s = self.clone();
        for row in &mut s.values {
            for x in row.iter_mut() {
                if x.abs() < self.noise_floor {
                    *x = 0.0;
                }
            }
        }
        s
    }

    /// Three-column `i j S_ij` plot data.
    pub fn to_plot_data(&self) -> String {
        let mut s = format!("# sensitivity eps={:e} split={}\n# spike class value\n", self.epsilon, self.split);
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                s.push_str(&format!("{i} {j} {v:.10e}\n"));
            }
        }
        s
    }
}

/// `θ + (sign·ε)·q`, computed so that negating `q` or `sign` gives the
/// bitwise negated step.
fn perturbed(theta: &ParamVector, q: &ParamVector, step: f64) -> ParamVector {
    ParamVector::new(
        theta
            .as_slice()
            .iter()
            .zip(q.as_slice())
            .map(|(t, x)| t + step * x)
            .collect(),
    )
}

pub fn sensitivity_matrix(
    spec: &MlpSpec,
    theta: &ParamVector,
    basis: &SpikeBasis,
    epsilon: f64,
    split: &Samples,
    split_name: &str,
) -> Result<SensitivityMatrix> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("probe amplitude must be positive".into()));
    }
    let classes = spec.classes();
    let counts = split.class_counts(classes);
    if let Some(j) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingClass(j));
    }
    for q in &basis.vectors {
        crate::error::check_dim(theta.dim(), q.dim())?;
    }
    let k = basis.len();
    // evaluation 2i is +ε along q_i, 2i+1 is −ε
    let accs: Vec<Result<ClassAccuracy>> = exec::map_range(2 * k, |e| {
        let step = if e % 2 == 0 { epsilon } else { -epsilon };
        per_class_accuracy(spec, &perturbed(theta, &basis.vectors[e / 2], step), split)
    });
    let accs: Vec<ClassAccuracy> = accs.into_iter().collect::<Result<_>>()?;
    let values = (0..k)
        .map(|i| {
            let (plus, minus) = (&accs[2 * i], &accs[2 * i + 1]);
            (0..classes)
                .map(|j| (plus.per_class[j] - minus.per_class[j]) / (2.0 * epsilon))
                .collect()
        })
        .collect();
    let min_n = *counts.iter().min().unwrap();
    Ok(SensitivityMatrix {
        values,
        epsilon,
        source: basis.source.clone(),
        split: split_name.to_string(),
        noise_floor: 1.0 / (2.0 * epsilon * min_n as f64),
        class_counts: counts,
        evaluations: 2 * k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDiagnostics {
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `σ_i² / Σ σ_j²`.
    pub energy_shares: Vec<f64>,
    /// `exp(−Σ p_i ln p_i)` with `0 ln 0 = 0`.
    pub r_eff: f64,
    /// `σ₁/σ₂`, infinite when `σ₂ = 0`.
    pub flatness: f64,
    pub frobenius: f64,
}

pub fn effective_rank(s: &SensitivityMatrix) -> Result<RankDiagnostics> {
    effective_rank_of(&s.to_matrix())
}

pub fn effective_rank_of(m: &DMatrix<f64>) -> Result<RankDiagnostics> {
    if m.iter().all(|&x| x == 0.0) || m.is_empty() {
        return Err(Error::ZeroMatrix);
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    rank_from_singular_values(&sv)
}

/// Diagnostics from a descending singular spectrum.
pub fn rank_from_singular_values(sv: &[f64]) -> Result<RankDiagnostics> {
    let energy: f64 = sv.iter().map(|s| s * s).sum();
    if !(energy > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let shares: Vec<f64> = sv.iter().map(|s| s * s / energy).collect();
    let entropy: f64 = shares
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    let flatness = match sv.get(1) {
        Some(&s2) if s2 > 0.0 => sv[0] / s2,
        _ => f64::INFINITY,
    };
    Ok(RankDiagnostics {
        singular_values: sv.to_vec(),
        energy_shares: shares,
        r_eff: entropy.exp(),
        flatness,
        frobenius: energy.sqrt(),
    })
}

/// At most `per_class_cap` training samples per class, drawn by a seeded
/// shuffle. The held-out split is never touched.
pub fn stratified_split(data: &Dataset, per_class_cap: usize, seed: u64) -> Result<Samples> {
    let counts = data.train().class_counts(data.classes());
    if let Some(j) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingClass(j));
    }
    stratified_batch(data.train(), data.classes(), per_class_cap, &mut Rng::new(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train, BlobFixture, TrainConfig};

    #[test]
    fn uniform_singular_values() {
        for k in 1..=10 {
            let d = rank_from_singular_values(&vec![2.5; k]).unwrap();
            assert!((d.r_eff - k as f64).abs() <= 1e-10);
        }
        let rank_one = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!((effective_rank_of(&rank_one).unwrap().r_eff - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn reported_flatness_values() {
        let reported = rank_from_singular_values(&[6.41, 5.22, 3.99]).unwrap();
        assert!((reported.flatness - 1.228).abs() < 5e-4);
        let skewed = rank_from_singular_values(&[17.4, 9.4, 3.8]).unwrap();
        assert!((skewed.flatness - 1.851).abs() < 5e-4);
        let top_two = skewed.energy_shares[0] + skewed.energy_shares[1];
        assert!((top_two - 0.964).abs() < 5e-4);
    }

    #[test]
    fn zero_matrix_is_an_error() {
        assert!(matches!(effective_rank_of(&DMatrix::zeros(3, 4)), Err(Error::ZeroMatrix)));
    }

    #[test]
    fn entropy_bound_and_scale_invariance() {
        let mut rng = Rng::new(1);
        for _ in 0..50 {
            let k = 1 + rng.below(6) as usize;
            let m = DMatrix::from_fn(k, 4, |_, _| rng.gaussian());
            let d = effective_rank_of(&m).unwrap();
            assert!(d.r_eff >= 1.0 - 1e-12 && d.r_eff <= k as f64 + 1e-12);
            assert!(d.flatness >= 1.0);
            let scaled = effective_rank_of(&(&m * -4.0)).unwrap();
            assert_eq!(scaled.r_eff, d.r_eff);
            let odd = effective_rank_of(&(&m * 3.7)).unwrap();
            assert!((odd.r_eff - d.r_eff).abs() <= 1e-12);
        }
    }

    fn fixture() -> (MlpSpec, ParamVector, Dataset) {
        let data = BlobFixture::imbalanced4(5).generate().unwrap();
        let spec = MlpSpec::tanh(20, &[8], 4).unwrap();
        let cfg = TrainConfig { epochs: 5, seed: 5, ..TrainConfig::default() };
        let theta = train(&spec, data.train(), &cfg).unwrap().theta;
        (spec, theta, data)
    }

    fn random_basis(p: usize, k: usize, seed: u64) -> SpikeBasis {
        let mut rng = Rng::new(seed);
        let raw: Vec<_> = (0..k).map(|_| rng.gaussian_vector(p, 1.0)).collect();
        let v = crate::vecspace::orthonormalize(&raw, 1e-10).unwrap();
        SpikeBasis::new(vec![1.0; k], v, "random").unwrap()
    }

    #[test]
    fn sign_flip_negates_row_exactly() {
        let (spec, theta, data) = fixture();
        let b = random_basis(theta.dim(), 3, 1);
        let s = sensitivity_matrix(&spec, &theta, &b, 0.5, data.sensitivity(), "sensitivity").unwrap();
        let f = sensitivity_matrix(&spec, &theta, &b.with_flipped(1), 0.5, data.sensitivity(), "sensitivity").unwrap();
        assert_eq!(s.evaluations, 6);
        for j in 0..4 {
            assert_eq!(f.values[1][j], -s.values[1][j]);
            assert_eq!(f.values[0][j], s.values[0][j]);
        }
    }

    #[test]
    fn dead_unit_direction_gives_zero_row() {
        // a direction touching only the incoming weights of one hidden unit
        // whose outgoing weights are zero cannot change any prediction
        let (spec, mut theta, data) = fixture();
        let (off, rows, cols) = spec.classifier_block();
        for c in 0..rows {
            theta.as_mut_slice()[off + c * cols] = 0.0;
        }
        let mut q = ParamVector::zeros(theta.dim());
        for k in 0..20 {
            q.as_mut_slice()[k] = 1.0;
        }
        let q = q.normalized().unwrap();
        let b = SpikeBasis::new(vec![1.0], vec![q], "dead").unwrap();
        let s = sensitivity_matrix(&spec, &theta, &b, 3.0, data.sensitivity(), "sensitivity").unwrap();
        assert!(s.values[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_and_scale_relation() {
        let (spec, theta, data) = fixture();
        let b = random_basis(theta.dim(), 2, 2);
        let split = data.sensitivity();
        let a = sensitivity_matrix(&spec, &theta, &b, 0.25, split, "s").unwrap();
        assert_eq!(a, sensitivity_matrix(&spec, &theta, &b, 0.25, split, "s").unwrap());
        // (ε/c, c·q) probes the same points; the difference quotient scales by c
        let c = 2.0;
        let scaled = SpikeBasis::new(b.eigenvalues.clone(), b.vectors.iter().map(|q| q.scaled(c)).collect(), "s").unwrap();
        let s2 = sensitivity_matrix(&spec, &theta, &scaled, 0.25 / c, split, "s").unwrap();
        for i in 0..2 {
            for j in 0..4 {
                assert_eq!(s2.values[i][j], c * a.values[i][j]);
            }
        }
    }

    #[test]
    fn missing_class_aborts() {
        let (spec, theta, data) = fixture();
        let b = random_basis(theta.dim(), 1, 3);
        let only_zero: Vec<usize> = (0..data.sensitivity().len()).filter(|&i| data.sensitivity().y(i) == 0).collect();
        let split = data.sensitivity().subset(&only_zero);
        assert!(matches!(
            sensitivity_matrix(&spec, &theta, &b, 0.1, &split, "s"),
            Err(Error::MissingClass(1))
        ));
    }

    #[test]
    fn stratified_split_counts() {
        let data = BlobFixture::balanced4(1).generate().unwrap();
        let full = stratified_split(&data, 10_000, 0).unwrap();
        assert_eq!(&full, data.train());

        let data = BlobFixture::imbalanced4(1).generate().unwrap();
        let minority = data.train().class_counts(4)[3];
        let s = stratified_split(&data, minority, 0).unwrap();
        assert_eq!(s.class_counts(4), vec![minority; 4]);

        let data = BlobFixture::skewed8(1).generate().unwrap();
        let avail = data.train().class_counts(8);
        let s = stratified_split(&data, 250, 0).unwrap();
        let want: Vec<usize> = avail.iter().map(|&n| n.min(250)).collect();
        assert_eq!(s.class_counts(8), want);
        assert!(avail.iter().any(|&n| n < 250));
        assert!(data.heldout_accesses().is_empty());
    }
}
