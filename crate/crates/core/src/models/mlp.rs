//! Fully-connected softmax classifier with exact gradient and exact
//! Hessian–vector product.
//!
//! Parameters are laid out layer by layer: the `out × in` weight matrix in
//! row-major order followed by the `out` biases.

use serde::{Deserialize, Serialize};

use super::data::Samples;
use super::scalar::{Dual, Scalar};
use crate::error::{check_dim, Error, Result};
use crate::exec;
use crate::vecspace::{ParamVector, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    /// Hessian products use the almost-everywhere derivative.
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Loss {
    CrossEntropy,
    Focal { gamma: f64 },
    WeightedCe { class_weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub loss: Loss,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation, loss: Loss) -> Result<Self> {
        let spec = Self {
            layer_widths,
            activation,
            loss,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `d → hidden → C` tanh network with cross-entropy.
    pub fn tanh(input: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        Self::new(widths, Activation::Tanh, Loss::CrossEntropy)
    }

    pub fn with_loss(&self, loss: Loss) -> Result<Self> {
        Self::new(self.layer_widths.clone(), self.activation, loss)
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.layer_widths;
        if w.len() < 3 {
            return Err(Error::InvalidArgument(
                "an MLP needs an input width, at least one hidden layer and an output width".into(),
            ));
        }
        if w.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if self.classes() < 2 {
            return Err(Error::InvalidArgument("output width (classes) must be >= 2".into()));
        }
        match &self.loss {
            Loss::CrossEntropy => {}
            Loss::Focal { gamma } => {
                if !(*gamma >= 0.0) {
                    return Err(Error::InvalidArgument("focal gamma must be >= 0".into()));
                }
            }
            Loss::WeightedCe { class_weights } => {
                if class_weights.len() != self.classes() || class_weights.iter().any(|&c| !(c > 0.0)) {
                    return Err(Error::InvalidArgument(
                        "weighted CE needs one positive weight per class".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn layers(&self) -> Vec<Layer> {
        let mut off = 0;
        self.layer_widths
            .windows(2)
            .map(|w| {
                let l = Layer {
                    w: off,
                    b: off + w[0] * w[1],
                    n_in: w[0],
                    n_out: w[1],
                };
                off += (w[0] + 1) * w[1];
                l
            })
            .collect()
    }

    /// Offset and shape `(offset, rows, cols)` of the final weight matrix;
    /// row `c` is the classifier vector of class `c`.
    pub fn classifier_block(&self) -> (usize, usize, usize) {
        let last = *self.layers().last().unwrap();
        (last.w, last.n_out, last.n_in)
    }

    /// Offsets of every weight and bias block, in layout order, as
    /// `(weight_offset, bias_offset, n_in, n_out)`.
    pub fn blocks(&self) -> Vec<(usize, usize, usize, usize)> {
        self.layers().iter().map(|l| (l.w, l.b, l.n_in, l.n_out)).collect()
    }

    /// Scaled Gaussian initialization (`N(0, 1/fan_in)`), zero biases.
    pub fn init(&self, rng: &mut Rng) -> ParamVector {
        let mut theta = vec![0.0; self.param_count()];
        for l in self.layers() {
            let scale = 1.0 / (l.n_in as f64).sqrt();
            for t in &mut theta[l.w..l.w + l.n_in * l.n_out] {
                *t = scale * rng.gaussian();
            }
        }
        ParamVector::new(theta)
    }

    fn check(&self, theta_len: usize, batch: &Samples) -> Result<()> {
        check_dim(self.param_count(), theta_len)?;
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        check_dim(self.input_dim(), batch.dim())?;
        if let Some(m) = batch.max_label() {
            if m >= self.classes() {
                return Err(Error::InvalidArgument(format!("label {m} >= {}", self.classes())));
            }
        }
        Ok(())
    }

    /// Logits for one input.
    pub(crate) fn sample_logits<S: Scalar>(&self, theta: &[S], x: &[f64]) -> Vec<S> {
        let layers = self.layers();
        let mut a: Vec<S> = x.iter().map(|&v| S::constant(v)).collect();
        for (li, l) in layers.iter().enumerate() {
            let z = affine(theta, l, &a);
            a = if li + 1 == layers.len() {
                z
            } else {
                z.into_iter().map(|v| self.act(v)).collect()
            };
        }
        a
    }

    #[inline]
    fn act<S: Scalar>(&self, z: S) -> S {
        match self.activation {
            Activation::Tanh => z.tanh(),
            Activation::Relu => {
                if z.value() > 0.0 {
                    z
                } else {
                    S::zero()
                }
            }
        }
    }

    /// Per-sample loss; when `grad` is given it is overwritten with the
    /// per-sample gradient.
    fn sample_pass<S: Scalar>(
        &self,
        layers: &[Layer],
        theta: &[S],
        x: &[f64],
        y: usize,
        grad: Option<&mut [S]>,
    ) -> S {
        // forward, keeping post-activations of every layer
        let mut acts: Vec<Vec<S>> = Vec::with_capacity(layers.len() + 1);
        acts.push(x.iter().map(|&v| S::constant(v)).collect());
        let mut logits = Vec::new();
        for (li, l) in layers.iter().enumerate() {
            let z = affine(theta, l, acts.last().unwrap());
            if li + 1 == layers.len() {
                logits = z;
            } else {
                acts.push(z.into_iter().map(|v| self.act(v)).collect());
            }
        }

        let (loss, dlogits) = self.loss_and_dlogits(&logits, y);
        let Some(grad) = grad else {
            return loss;
        };

        let mut delta = dlogits;
        for li in (0..layers.len()).rev() {
            let l = layers[li];
            let a_in = &acts[li];
            for j in 0..l.n_out {
                let row = l.w + j * l.n_in;
                for k in 0..l.n_in {
                    grad[row + k] = delta[j] * a_in[k];
                }
                grad[l.b + j] = delta[j];
            }
            if li == 0 {
                break;
            }
            let mut prev = vec![S::zero(); l.n_in];
            for k in 0..l.n_in {
                let mut acc = S::zero();
                for j in 0..l.n_out {
                    acc += theta[l.w + j * l.n_in + k] * delta[j];
                }
                let a = a_in[k];
                prev[k] = match self.activation {
                    Activation::Tanh => acc * (S::constant(1.0) - a * a),
                    Activation::Relu => {
                        if a.value() > 0.0 {
                            acc
                        } else {
                            S::zero()
                        }
                    }
                };
            }
            delta = prev;
        }
        loss
    }

    fn loss_and_dlogits<S: Scalar>(&self, logits: &[S], y: usize) -> (S, Vec<S>) {
        let m = logits
            .iter()
            .map(|z| z.value())
            .fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<S> = logits.iter().map(|&z| z - S::constant(m)).collect();
        let exps: Vec<S> = shifted.iter().map(|&s| s.exp()).collect();
        let mut total = S::zero();
        for &e in &exps {
            total += e;
        }
        let probs: Vec<S> = exps.iter().map(|&e| e / total).collect();
        let log_py = shifted[y] - total.ln();

        let ce_grad = |w: f64| -> Vec<S> {
            probs
                .iter()
                .enumerate()
                .map(|(c, &p)| {
                    let g = if c == y { p - S::constant(1.0) } else { p };
                    if w == 1.0 {
                        g
                    } else {
                        g * w
                    }
                })
                .collect()
        };

        match &self.loss {
            Loss::CrossEntropy => (-log_py, ce_grad(1.0)),
            Loss::Focal { gamma } if *gamma == 0.0 => (-log_py, ce_grad(1.0)),
            Loss::WeightedCe { class_weights } => {
                let w = class_weights[y];
                (-log_py * w, ce_grad(w))
            }
            Loss::Focal { gamma } => {
                let gamma = *gamma;
                // 1 - p_y summed from the other classes for accuracy near p_y = 1
                let mut q = S::zero();
                for (c, &p) in probs.iter().enumerate() {
                    if c != y {
                        q += p;
                    }
                }
                let py = probs[y];
                let loss = -(q.powf(gamma) * log_py);
                // A = dL/dp_y · p_y = γ q^(γ-1) p_y ln p_y − q^γ
                let a = if q.value() == 0.0 {
                    S::zero()
                } else {
                    q.powf(gamma - 1.0) * py * log_py * gamma - q.powf(gamma)
                };
                let g = probs
                    .iter()
                    .enumerate()
                    .map(|(c, &p)| {
                        if c == y {
                            a * (S::constant(1.0) - p)
                        } else {
                            -(a * p)
                        }
                    })
                    .collect();
                (loss, g)
            }
        }
    }
}

#[inline]
fn affine<S: Scalar>(theta: &[S], l: &Layer, a: &[S]) -> Vec<S> {
    (0..l.n_out)
        .map(|j| {
            let row = &theta[l.w + j * l.n_in..l.w + (j + 1) * l.n_in];
            let mut acc = theta[l.b + j];
            for (w, x) in row.iter().zip(a) {
                acc += *w * *x;
            }
            acc
        })
        .collect()
}

/// Objective with a gradient that can be evaluated on any [`Scalar`], which
/// is all the dual-number Hessian–vector product needs.
pub trait TwiceDifferentiable: Sync {
    fn dim(&self) -> usize;
    /// Returns `(loss, gradient)` evaluated in scalar type `S`.
    fn loss_and_gradient_in<S: Scalar>(&self, theta: &[S]) -> Result<(S, Vec<S>)>;
}

/// `H v` by forward-mode differentiation of the reverse-mode gradient.
pub fn hvp_of<O: TwiceDifferentiable>(
    objective: &O,
    theta: &ParamVector,
    v: &ParamVector,
) -> Result<ParamVector> {
    check_dim(objective.dim(), theta.dim())?;
    check_dim(objective.dim(), v.dim())?;
    let duals: Vec<Dual> = theta
        .as_slice()
        .iter()
        .zip(v.as_slice())
        .map(|(&t, &d)| Dual::new(t, d))
        .collect();
    let (_, g) = objective.loss_and_gradient_in(&duals)?;
    Ok(ParamVector::new(g.into_iter().map(|d| d.eps).collect()))
}

/// An MLP paired with a fixed batch: the mean loss over the batch.
pub struct MlpObjective<'a> {
    pub spec: &'a MlpSpec,
    pub batch: &'a Samples,
}

const BLOCK: usize = 64;

impl TwiceDifferentiable for MlpObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn loss_and_gradient_in<S: Scalar>(&self, theta: &[S]) -> Result<(S, Vec<S>)> {
        self.spec.check(theta.len(), self.batch)?;
        let p = theta.len();
        let n = self.batch.len();
        let layers = self.spec.layers();
        let mut loss = S::zero();
        let mut grad = vec![S::zero(); p];
        // per-sample gradients in parallel, summed in sample order
        let mut start = 0;
        while start < n {
            let end = (start + BLOCK).min(n);
            let parts = exec::map_range(end - start, |k| {
                let i = start + k;
                let mut g = vec![S::zero(); p];
                let l = self.spec.sample_pass(
                    &layers,
                    theta,
                    self.batch.x(i),
                    self.batch.y(i),
                    Some(&mut g),
                );
                (l, g)
            });
            for (l, g) in parts {
                loss += l;
                for (acc, gi) in grad.iter_mut().zip(&g) {
                    *acc += *gi;
                }
            }
            start = end;
        }
        let nf = n as f64;
        Ok((
            loss.scale_div(nf),
            grad.into_iter().map(|g| g.scale_div(nf)).collect(),
        ))
    }
}

/// Forward pass result: mean loss and row-major `n × C` probabilities.
#[derive(Debug, Clone)]
pub struct Forward {
    pub loss: f64,
    pub probs: Vec<f64>,
}

pub fn forward(spec: &MlpSpec, theta: &ParamVector, batch: &Samples) -> Result<Forward> {
    spec.check(theta.dim(), batch)?;
    let layers = spec.layers();
    let c = spec.classes();
    let th = theta.as_slice();
    let rows = exec::map_range(batch.len(), |i| {
        let logits = spec.sample_logits(th, batch.x(i));
        let probs = softmax(&logits);
        let loss = spec.sample_pass::<f64>(&layers, th, batch.x(i), batch.y(i), None);
        (loss, probs)
    });
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(batch.len() * c);
    for (l, p) in rows {
        loss += l;
        probs.extend(p);
    }
    Ok(Forward {
        loss: loss / batch.len() as f64,
        probs,
    })
}

/// Row-major `n × C` logits.
pub fn logits(spec: &MlpSpec, theta: &ParamVector, batch: &Samples) -> Result<Vec<f64>> {
    check_dim(spec.param_count(), theta.dim())?;
    check_dim(spec.input_dim(), batch.dim())?;
    let th = theta.as_slice();
    let rows = exec::map_range(batch.len(), |i| spec.sample_logits(th, batch.x(i)));
    Ok(rows.into_iter().flatten().collect())
}

/// Mean batch loss.
pub fn loss(spec: &MlpSpec, theta: &ParamVector, batch: &Samples) -> Result<f64> {
    Ok(forward(spec, theta, batch)?.loss)
}

pub fn gradient(spec: &MlpSpec, theta: &ParamVector, batch: &Samples) -> Result<ParamVector> {
    Ok(loss_and_gradient(spec, theta, batch)?.1)
}

pub fn loss_and_gradient(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: &Samples,
) -> Result<(f64, ParamVector)> {
    let obj = MlpObjective { spec, batch };
    let (l, g) = obj.loss_and_gradient_in::<f64>(theta.as_slice())?;
    Ok((l, ParamVector::new(g)))
}

/// Exact Hessian–vector product of the mean batch loss.
pub fn hvp(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: &Samples,
    v: &ParamVector,
) -> Result<ParamVector> {
    hvp_of(&MlpObjective { spec, batch }, theta, v)
}

/// Argmax with ties broken toward the lowest class index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

pub fn predict(spec: &MlpSpec, theta: &ParamVector, batch: &Samples) -> Result<Vec<usize>> {
    let c = spec.classes();
    Ok(logits(spec, theta, batch)?.chunks(c).map(argmax).collect())
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let mut s = 0.0;
    for &x in &e {
        s += x;
    }
    e.into_iter().map(|x| x / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BlobFixture;

    fn small() -> (MlpSpec, Samples, ParamVector) {
        let spec = MlpSpec::tanh(20, &[8], 4).unwrap();
        let data = BlobFixture::imbalanced4(1).generate().unwrap();
        let batch = data.train().prefix(40);
        let theta = spec.init(&mut Rng::new(5));
        (spec, batch, theta)
    }

    #[test]
    fn param_count_matches_layout() {
        let spec = MlpSpec::tanh(20, &[32, 16], 4).unwrap();
        assert_eq!(spec.param_count(), 21 * 32 + 33 * 16 + 17 * 4);
        assert_eq!(spec.classifier_block(), (21 * 32 + 33 * 16, 4, 16));
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3, 2], Activation::Tanh, Loss::CrossEntropy).is_err());
        assert!(MlpSpec::new(vec![3, 4, 1], Activation::Tanh, Loss::CrossEntropy).is_err());
        assert!(MlpSpec::new(vec![3, 4, 2], Activation::Tanh, Loss::Focal { gamma: -1.0 }).is_err());
        assert!(MlpSpec::new(
            vec![3, 4, 2],
            Activation::Tanh,
            Loss::WeightedCe { class_weights: vec![1.0] }
        )
        .is_err());
    }

    #[test]
    fn zero_parameters_give_uniform_probabilities() {
        let (spec, batch, _) = small();
        let f = forward(&spec, &ParamVector::zeros(spec.param_count()), &batch).unwrap();
        for p in &f.probs {
            assert_eq!(*p, 0.25);
        }
        assert!((f.loss - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (spec, batch, theta) = small();
        let f = forward(&spec, &theta.scaled(3.0), &batch).unwrap();
        for row in f.probs.chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn errors_on_bad_input() {
        let (spec, batch, theta) = small();
        assert!(matches!(
            forward(&spec, &ParamVector::zeros(3), &batch),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            forward(&spec, &theta, &Samples::empty(20)),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn focal_gamma_zero_is_cross_entropy() {
        let (spec, batch, theta) = small();
        let focal = spec.with_loss(Loss::Focal { gamma: 0.0 }).unwrap();
        let a = loss_and_gradient(&spec, &theta, &batch).unwrap();
        let b = loss_and_gradient(&focal, &theta, &batch).unwrap();
        assert!((a.0 - b.0).abs() <= 1e-12);
        assert!(a.1.sub(&b.1).unwrap().norm() <= 1e-12);
    }

    #[test]
    fn unit_class_weights_are_cross_entropy() {
        let (spec, batch, theta) = small();
        let w = spec
            .with_loss(Loss::WeightedCe { class_weights: vec![1.0; 4] })
            .unwrap();
        let a = gradient(&spec, &theta, &batch).unwrap();
        let b = gradient(&w, &theta, &batch).unwrap();
        assert!(a.sub(&b).unwrap().norm() <= 1e-12);
    }

    #[test]
    fn loss_vanishes_with_large_logit_gap() {
        // one hidden unit wired to produce logit gap `gap` for class 0
        let spec = MlpSpec::tanh(1, &[1], 2).unwrap();
        let x = Samples::new(1, vec![1.0], vec![0]).unwrap();
        let gap = 20.0;
        // hidden: tanh(30 * 1) ~ 1; output: [gap, 0]
        let theta = ParamVector::new(vec![30.0, 0.0, gap, 0.0, 0.0, 0.0]);
        let l = loss(&spec, &theta, &x).unwrap();
        let h = 30f64.tanh();
        let analytic = (1.0 + (-gap * h).exp()).ln();
        assert!((l - analytic).abs() < 1e-15);
        assert!(l < 3e-9);
    }

    #[test]
    fn hvp_of_zero_is_zero() {
        let (spec, batch, theta) = small();
        let hv = hvp(&spec, &theta, &batch, &ParamVector::zeros(spec.param_count())).unwrap();
        assert!(hv.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dual_gradient_real_part_is_the_gradient() {
        let (spec, batch, theta) = small();
        let g = gradient(&spec, &theta, &batch).unwrap();
        let obj = MlpObjective { spec: &spec, batch: &batch };
        let duals: Vec<Dual> = theta.as_slice().iter().map(|&t| Dual::new(t, 0.5)).collect();
        let (_, gd) = obj.loss_and_gradient_in(&duals).unwrap();
        for (a, b) in g.as_slice().iter().zip(&gd) {
            assert_eq!(a.to_bits(), b.re.to_bits());
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn sequential_and_parallel_are_bit_identical() {
        let (spec, batch, theta) = small();
        let v = Rng::new(9).gaussian_vector(spec.param_count(), 1.0);
        let prev = exec::mode();
        exec::set_mode(exec::Mode::Sequential);
        let a = hvp(&spec, &theta, &batch, &v).unwrap();
        exec::set_mode(exec::Mode::Parallel);
        let b = hvp(&spec, &theta, &batch, &v).unwrap();
        exec::set_mode(prev);
        assert!(a.bit_eq(&b));
    }
}
