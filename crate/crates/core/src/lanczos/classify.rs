use serde::{Deserialize, Serialize};

/// Spikes must exceed the bulk median by this factor to count as clear.
pub const DEFAULT_GAP_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeLabel {
    ClearSpike,
    Borderline,
    /// Negative Ritz values; reported but never used as directions.
    Excluded,
}

impl SpikeLabel {
    pub fn name(self) -> &'static str {
        match self {
            SpikeLabel::ClearSpike => "clear_spike",
            SpikeLabel::Borderline => "borderline",
            SpikeLabel::Excluded => "excluded",
        }
    }
}

pub fn classify_spikes(eigenvalues: &[f64], bulk_median: f64, gap_factor: f64) -> Vec<SpikeLabel> {
    let threshold = gap_factor * bulk_median;
    eigenvalues
        .iter()
        .map(|&l| {
            if l < 0.0 {
                SpikeLabel::Excluded
            } else if l >= threshold {
                SpikeLabel::ClearSpike
            } else {
                SpikeLabel::Borderline
            }
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Largest `k` such that each of the top `k` values (descending input)
/// exceeds `factor` times the median of the values after them. `k` is
/// capped at half the window so the median is taken over at least as many
/// values as are counted.
pub fn count_outliers(eigenvalues: &[f64], factor: f64) -> usize {
    let mut best = 0;
    for k in 1..=eigenvalues.len() / 2 {
        let rest = median(&eigenvalues[k..]);
        if eigenvalues[..k].iter().all(|&l| l > factor * rest) {
            best = k;
        }
    }
    best
}
