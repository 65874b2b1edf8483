//! Adaptive amplitude control from the Surgery improvement signal.

use serde::{Deserialize, Serialize};

pub const ADAM_EPS: f64 = 1e-8;

/// Which amplitude the tanh gate interpolates toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// `α = α_min + gate·(α_max⁽⁰⁾ − α_min)`.
    #[default]
    Initial,
    /// `α = α_min + gate·(α_prev − α_min)`: the multiplicative form whose
    /// small-β limit is a geometric decay.
    Previous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeController {
    pub beta1: f64,
    pub beta2: f64,
    pub alpha_min: f64,
    pub alpha0: f64,
    pub anchor: Anchor,
    pub m: f64,
    pub v: f64,
    pub t: u32,
    pub current: f64,
    pub last_snr: f64,
}

impl AmplitudeController {
    /// Moments with `β₁ = 1 − 4/T` and `β₂ = 1 − 1/T`, clamped to `[0, 1)`.
    pub fn new(total_iterations: usize, alpha_min: f64, alpha0: f64) -> Self {
        let t = total_iterations.max(1) as f64;
        Self::with_betas((1.0 - 4.0 / t).max(0.0), (1.0 - 1.0 / t).max(0.0), alpha_min, alpha0)
    }

    pub fn with_betas(beta1: f64, beta2: f64, alpha_min: f64, alpha0: f64) -> Self {
        assert!(alpha_min <= alpha0, "alpha_min must not exceed the initial amplitude");
        Self {
            beta1,
            beta2,
            alpha_min,
            alpha0,
            anchor: Anchor::Initial,
            m: 0.0,
            v: 0.0,
            t: 0,
            current: alpha0,
            last_snr: 0.0,
        }
    }

    pub fn with_anchor(mut self, anchor: Anchor) -> Self {
        self.anchor = anchor;
        self
    }

    /// Bias-corrected `m̂ / (√v̂ + ε)` after folding in `g`.
    fn snr(&mut self, g: f64) -> f64 {
        self.t += 1;
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g;
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g;
        let mh = self.m / (1.0 - self.beta1.powi(self.t as i32));
        let vh = self.v / (1.0 - self.beta2.powi(self.t as i32));
        mh / (vh.sqrt() + ADAM_EPS)
    }

    /// Consumes one improvement signal and returns the next amplitude.
    pub fn update(&mut self, g: f64) -> f64 {
        let snr = self.snr(g);
        self.last_snr = snr;
        let gate = if snr.is_nan() { 0.5 } else { 0.5 * (1.0 + (5.0 * snr).tanh()) };
        let top = match self.anchor {
            Anchor::Initial => self.alpha0,
            Anchor::Previous => self.current,
        };
        let next = self.alpha_min + gate * (top - self.alpha_min);
        self.current = next.clamp(self.alpha_min, self.alpha0);
        self.current
    }
}
