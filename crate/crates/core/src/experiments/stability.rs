//! Spike-subspace stability across nested Hessian batches.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lanczos::{subspace_stability, top_eigenpairs, SpikeBasis, StabilityReport};
use crate::models::{MlpSpec, Samples};
use crate::operators::{HvpOracle, ModelOracle};
use crate::vecspace::{ParamVector, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityStudyConfig {
    /// Strictly increasing; the last is the reference.
    pub batch_sizes: Vec<usize>,
    pub top_k: usize,
    #[serde(default = "default_order")]
    pub lanczos_order: usize,
    pub angle_ks: Vec<usize>,
    /// Seeds the batch order and, fixed across sizes, the Lanczos start.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub hvp_repeats: usize,
}

fn default_order() -> usize {
    10
}
fn default_repeats() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    /// Fastest of the repeated single HVPs.
    pub hvp_seconds: f64,
    pub lanczos_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityStudy {
    pub sizes: Vec<usize>,
    pub eigenvalues: Vec<Vec<f64>>,
    /// Each size against the reference (last) size.
    pub reports: Vec<StabilityReport>,
    pub timings: Vec<TimingRow>,
    #[serde(skip)]
    pub bases: Vec<SpikeBasis>,
}

impl StabilityStudy {
    pub fn eigenvalue_table(&self) -> String {
        let mut s = String::from("# n eigenvalues...\n");
        for (n, ev) in self.sizes.iter().zip(&self.eigenvalues) {
            let cols: Vec<String> = ev.iter().map(|v| format!("{v:.6e}")).collect();
            s.push_str(&format!("{n} {}\n", cols.join(" ")));
        }
        s
    }

    pub fn timing_table(&self) -> String {
        let mut s = String::from("# n hvp_seconds lanczos_seconds\n");
        for t in &self.timings {
            s.push_str(&format!("{} {:.6e} {:.6e}\n", t.n, t.hvp_seconds, t.lanczos_seconds));
        }
        s
    }

    pub fn angle_table(&self) -> String {
        let mut s = String::from("# n k max_deg mean_deg matched_mean diagonal_mean\n");
        for (n, r) in self.sizes.iter().zip(&self.reports) {
            for a in &r.angles {
                s.push_str(&format!(
                    "{n} {} {:.4} {:.4} {:.6} {:.6}\n",
                    a.k, a.max, a.mean, r.matched_mean, r.diagonal_mean
                ));
            }
        }
        s
    }
}

/// Top eigenpairs on nested prefixes of one seeded shuffle of `samples`,
/// all with the same Lanczos start.
pub fn stability_study(
    spec: &MlpSpec,
    theta: &ParamVector,
    samples: &Samples,
    config: &StabilityStudyConfig,
) -> Result<StabilityStudy> {
    let sizes = &config.batch_sizes;
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(Error::InvalidArgument("batch sizes must be positive and strictly increasing".into()));
    }
    let n_ref = *sizes.last().unwrap();
    if n_ref > samples.len() {
        return Err(Error::InvalidArgument(format!(
            "reference size {n_ref} exceeds the {} available samples",
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    Rng::derived(config.seed, &[0x57ab]).shuffle(&mut order);
    let start_seed = crate::vecspace::derive_seed(config.seed, &[0x57a7]);
    let probe = Rng::derived(config.seed, &[0x9b0e]).unit_vector(theta.dim());

    let mut bases = Vec::with_capacity(sizes.len());
    let mut timings = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let batch = samples.subset(&order[..n]);
        let oracle = ModelOracle::new(spec.clone(), theta.clone(), batch)?;
        let mut hvp_seconds = f64::INFINITY;
        for _ in 0..config.hvp_repeats.max(1) {
            let t = Instant::now();
            let _ = oracle.apply(&probe)?;
            hvp_seconds = hvp_seconds.min(t.elapsed().as_secs_f64());
        }
        let t = Instant::now();
        let basis = top_eigenpairs(&oracle, config.lanczos_order, config.top_k, start_seed)?;
        timings.push(TimingRow {
            n,
            hvp_seconds,
            lanczos_seconds: t.elapsed().as_secs_f64(),
        });
        bases.push(basis);
    }
    let reference = bases.last().unwrap().clone();
    let reports = bases
        .iter()
        .map(|b| {
            let ks: Vec<usize> = config.angle_ks.iter().copied().filter(|&k| k <= b.len().min(reference.len())).collect();
            subspace_stability(b, &reference, &ks)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityStudy {
        sizes: sizes.clone(),
        eigenvalues: bases.iter().map(|b| b.eigenvalues.clone()).collect(),
        reports,
        timings,
        bases,
    })
}
