use serde::{Deserialize, Serialize};

use super::{classify_spikes, SpikeBasis, SpikeLabel};
use crate::error::{Error, Result};

/// Structured summary of one Lanczos run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumReport {
    pub source: String,
    pub order: usize,
    pub seed: u64,
    pub eigenvalues: Vec<f64>,
    pub labels: Vec<SpikeLabel>,
    /// `λ_i / λ_1`.
    pub ratios: Vec<f64>,
    pub bulk_median: f64,
    pub gap_factor: f64,
    pub orth_error: f64,
    pub seconds: f64,
}

impl SpectrumReport {
    pub fn new(basis: &SpikeBasis, order: usize, seed: u64, bulk_median: f64, gap_factor: f64, seconds: f64) -> Self {
        let top = basis.eigenvalues.first().copied().unwrap_or(f64::NAN);
        Self {
            source: basis.source.clone(),
            order,
            seed,
            labels: classify_spikes(&basis.eigenvalues, bulk_median, gap_factor),
            ratios: basis.eigenvalues.iter().map(|l| l / top).collect(),
            eigenvalues: basis.eigenvalues.clone(),
            bulk_median,
            gap_factor,
            orth_error: basis.orth_error,
            seconds,
        }
    }

    pub fn clear_spikes(&self) -> usize {
        self.labels.iter().filter(|&&l| l == SpikeLabel::ClearSpike).count()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecspace::ParamVector;

    #[test]
    fn toml_round_trip() {
        let b = SpikeBasis::new(
            vec![3.0, 1.0 / 3.0, -0.1],
            (0..3).map(|i| ParamVector::unit(3, i)).collect(),
            "unit",
        )
        .unwrap();
        let r = SpectrumReport::new(&b, 3, 7, 1e-3, 1e3, 0.125);
        let back = SpectrumReport::from_toml(&r.to_toml().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.clear_spikes(), 1);
    }
}
