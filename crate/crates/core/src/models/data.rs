//! Labeled samples, split bookkeeping and the seeded Gaussian-blob fixtures.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vecspace::Rng;

/// Row-major `n × dim` inputs with integer labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    dim: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl Samples {
    pub fn new(dim: usize, inputs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        check_dim(labels.len() * dim, inputs.len())?;
        Ok(Self { dim, inputs, labels })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            inputs: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn y(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn push(&mut self, x: &[f64], y: usize) {
        assert_eq!(x.len(), self.dim);
        self.inputs.extend_from_slice(x);
        self.labels.push(y);
    }

    pub fn subset(&self, indices: &[usize]) -> Samples {
        let mut out = Samples::empty(self.dim);
        for &i in indices {
            out.push(self.x(i), self.y(i));
        }
        out
    }

    /// First `n` samples.
    pub fn prefix(&self, n: usize) -> Samples {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Every sample repeated `k` times in place (`a a b b ...`).
    pub fn repeated(&self, k: usize) -> Samples {
        let idx: Vec<usize> = (0..self.len()).flat_map(|i| std::iter::repeat_n(i, k)).collect();
        self.subset(&idx)
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &y in &self.labels {
            if y < classes {
                counts[y] += 1;
            }
        }
        counts
    }

    pub fn max_label(&self) -> Option<usize> {
        self.labels.iter().copied().max()
    }

    /// Same inputs with labels permuted by `rng` (used as a null model).
    pub fn with_shuffled_labels(&self, rng: &mut Rng) -> Samples {
        let mut labels = self.labels.clone();
        rng.shuffle(&mut labels);
        Samples {
            dim: self.dim,
            inputs: self.inputs.clone(),
            labels,
        }
    }
}

/// Index ranges of each split within the generated sample pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub fixture: String,
    pub train: (usize, usize),
    pub sensitivity: (usize, usize),
    pub heldout: (usize, usize),
    pub train_counts: Vec<usize>,
    pub sensitivity_counts: Vec<usize>,
    pub heldout_counts: Vec<usize>,
}

/// A classification problem with disjoint train / sensitivity / held-out
/// splits. The held-out split is only reachable through
/// [`Dataset::heldout`], which records every access.
#[derive(Debug)]
pub struct Dataset {
    classes: usize,
    train: Samples,
    sensitivity: Samples,
    heldout: Samples,
    manifest: SplitManifest,
    heldout_log: Mutex<Vec<String>>,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Self {
            classes: self.classes,
            train: self.train.clone(),
            sensitivity: self.sensitivity.clone(),
            heldout: self.heldout.clone(),
            manifest: self.manifest.clone(),
            heldout_log: Mutex::new(Vec::new()),
        }
    }
}

impl Dataset {
    pub fn new(
        classes: usize,
        train: Samples,
        sensitivity: Samples,
        heldout: Samples,
        manifest: SplitManifest,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        for s in [&train, &sensitivity, &heldout] {
            check_dim(train.dim(), s.dim())?;
            if let Some(m) = s.max_label() {
                if m >= classes {
                    return Err(Error::InvalidArgument(format!(
                        "label {m} out of range for {classes} classes"
                    )));
                }
            }
        }
        Ok(Self {
            classes,
            train,
            sensitivity,
            heldout,
            manifest,
            heldout_log: Mutex::new(Vec::new()),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    pub fn train(&self) -> &Samples {
        &self.train
    }

    pub fn sensitivity(&self) -> &Samples {
        &self.sensitivity
    }

    /// Held-out split, for final reporting only. `purpose` is logged.
    pub fn heldout(&self, purpose: &str) -> &Samples {
        self.heldout_log.lock().unwrap().push(purpose.to_string());
        &self.heldout
    }

    /// Purposes of every held-out access so far.
    pub fn heldout_accesses(&self) -> Vec<String> {
        self.heldout_log.lock().unwrap().clone()
    }

    pub fn manifest(&self) -> &SplitManifest {
        &self.manifest
    }

    /// Replace the training split (used for label-shuffled null models).
    pub fn with_train(&self, train: Samples) -> Dataset {
        let mut d = self.clone();
        d.train = train;
        d
    }
}

pub const REPORT_ACCESS: &str = "final-report";

/// Seeded C-class Gaussian-blob mixture.
///
/// Class means sit on scaled coordinate axes, so every pair is
/// `separation` apart; the optional `entangled` pair `(a, b, distance)`
/// moves mean `b` to within `distance` of mean `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobFixture {
    pub name: String,
    pub classes: usize,
    pub dim: usize,
    pub frequencies: Vec<f64>,
    pub n_train: usize,
    pub n_sensitivity: usize,
    pub n_heldout: usize,
    pub separation: f64,
    pub noise: f64,
    pub entangled: Option<(usize, usize, f64)>,
    pub seed: u64,
}

impl BlobFixture {
    /// The four-class imbalanced fixture used by the rebalancing experiments.
    pub fn imbalanced4(seed: u64) -> Self {
        Self {
            name: "imbalanced-4".into(),
            classes: 4,
            dim: 20,
            frequencies: vec![0.55, 0.25, 0.15, 0.05],
            n_train: 2000,
            n_sensitivity: 2000,
            n_heldout: 2000,
            separation: 3.0,
            noise: 1.0,
            entangled: Some((1, 2, 2.0)),
            seed,
        }
    }

    pub fn balanced4(seed: u64) -> Self {
        Self {
            name: "balanced-4".into(),
            frequencies: vec![0.25; 4],
            ..Self::imbalanced4(seed)
        }
    }

    /// Two well-separated blobs (margin well above 4σ).
    pub fn separable2(seed: u64) -> Self {
        Self {
            name: "separable-2".into(),
            classes: 2,
            dim: 20,
            frequencies: vec![0.5, 0.5],
            n_train: 400,
            n_sensitivity: 200,
            n_heldout: 200,
            separation: 10.0,
            noise: 1.0,
            entangled: None,
            seed,
        }
    }

    pub fn twelve_class(seed: u64) -> Self {
        Self {
            name: "twelve-class".into(),
            classes: 12,
            dim: 20,
            frequencies: vec![1.0 / 12.0; 12],
            n_train: 2400,
            n_sensitivity: 1200,
            n_heldout: 1200,
            separation: 3.5,
            noise: 1.0,
            entangled: Some((3, 5, 2.0)),
            seed,
        }
    }

    /// Eight classes with a long tail, frequencies shaped like a
    /// dermatology benchmark.
    pub fn skewed8(seed: u64) -> Self {
        Self {
            name: "skewed-8".into(),
            classes: 8,
            dim: 20,
            frequencies: vec![0.18, 0.508, 0.13, 0.035, 0.1, 0.012, 0.01, 0.025],
            n_train: 20000,
            n_sensitivity: 1000,
            n_heldout: 1000,
            separation: 3.0,
            noise: 1.0,
            entangled: None,
            seed,
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        Ok(match name {
            "imbalanced-4" => Self::imbalanced4(seed),
            "balanced-4" => Self::balanced4(seed),
            "separable-2" => Self::separable2(seed),
            "twelve-class" => Self::twelve_class(seed),
            "skewed-8" => Self::skewed8(seed),
            other => return Err(Error::InvalidArgument(format!("unknown fixture preset {other:?}"))),
        })
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        let scale = self.separation / std::f64::consts::SQRT_2;
        let mut means: Vec<Vec<f64>> = (0..self.classes)
            .map(|c| {
                let mut m = vec![0.0; self.dim];
                m[c % self.dim] = scale;
                m
            })
            .collect();
        if let Some((a, b, dist)) = self.entangled {
            let diff: Vec<f64> = means[b].iter().zip(&means[a]).map(|(x, y)| x - y).collect();
            let n = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
            means[b] = means[a]
                .iter()
                .zip(&diff)
                .map(|(m, d)| m + dist * d / n)
                .collect();
        }
        means
    }

    pub fn generate(&self) -> Result<Dataset> {
        if self.classes < 2 || self.frequencies.len() != self.classes {
            return Err(Error::InvalidArgument(
                "frequencies must list one positive weight per class (C >= 2)".into(),
            ));
        }
        if self.classes > self.dim {
            return Err(Error::InvalidArgument("fixture needs classes <= dim".into()));
        }
        if self.frequencies.iter().any(|&f| f <= 0.0) {
            return Err(Error::InvalidArgument("class frequencies must be positive".into()));
        }
        let means = self.means();
        let mut rng = Rng::new(self.seed);
        let mut split = |n: usize| -> (Samples, Vec<usize>) {
            let counts = apportion(&self.frequencies, n);
            let mut labels: Vec<usize> = counts
                .iter()
                .enumerate()
                .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
                .collect();
            rng.shuffle(&mut labels);
            let mut s = Samples::empty(self.dim);
            let mut x = vec![0.0; self.dim];
            for &y in &labels {
                for (xi, m) in x.iter_mut().zip(&means[y]) {
                    *xi = m + self.noise * rng.gaussian();
                }
                s.push(&x, y);
            }
            (s, counts)
        };
        let (train, train_counts) = split(self.n_train);
        let (sensitivity, sensitivity_counts) = split(self.n_sensitivity);
        let (heldout, heldout_counts) = split(self.n_heldout);
        let a = train.len();
        let b = a + sensitivity.len();
        let c = b + heldout.len();
        let manifest = SplitManifest {
            seed: self.seed,
            fixture: self.name.clone(),
            train: (0, a),
            sensitivity: (a, b),
            heldout: (b, c),
            train_counts,
            sensitivity_counts,
            heldout_counts,
        };
        Dataset::new(self.classes, train, sensitivity, heldout, manifest)
    }
}

/// Largest-remainder rounding of `weights · n`, at least one per class.
fn apportion(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let raw: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| (r.floor() as usize).max(1)).collect();
    let mut assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| (raw[j] - raw[j].floor()).total_cmp(&(raw[i] - raw[i].floor())));
    let mut k = 0;
    while assigned < n {
        counts[order[k % order.len()]] += 1;
        assigned += 1;
        k += 1;
    }
    counts
}
