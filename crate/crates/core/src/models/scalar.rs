//! Scalar abstraction shared by the value pass and the dual-number pass.
//!
//! Running the reverse-mode gradient code on [`Dual`] numbers whose tangent
//! is seeded with `v` yields `∇L` in the real part and `H v` in the tangent:
//! forward-mode differentiation of the reverse-mode gradient.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Mul<f64, Output = Self>
{
    fn constant(x: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn powf(self, k: f64) -> Self;
    /// Division by a real constant, applied componentwise.
    fn scale_div(self, k: f64) -> Self;
    fn zero() -> Self {
        Self::constant(0.0)
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn powf(self, k: f64) -> Self {
        f64::powf(self, k)
    }
    #[inline]
    fn scale_div(self, k: f64) -> Self {
        self / k
    }
}

/// First-order dual number `re + eps·ε`, `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    #[inline]
    pub fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, k: f64) -> Dual {
        Dual::new(self.re * k, self.eps * k)
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let re = self.re / o.re;
        Dual::new(re, (self.eps - re * o.eps) / o.re)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.eps)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        self.re += o.re;
        self.eps += o.eps;
    }
}

impl Scalar for Dual {
    #[inline]
    fn constant(x: f64) -> Self {
        Dual::new(x, 0.0)
    }
    #[inline]
    fn value(self) -> f64 {
        self.re
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.eps)
    }
    #[inline]
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.eps / self.re)
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        Dual::new(t, (1.0 - t * t) * self.eps)
    }
    #[inline]
    fn powf(self, k: f64) -> Self {
        if k == 0.0 {
            return Dual::new(1.0, 0.0);
        }
        if k == 1.0 {
            return self;
        }
        let d = if self.re == 0.0 && k > 1.0 {
            0.0
        } else {
            k * self.re.powf(k - 1.0)
        };
        Dual::new(self.re.powf(k), d * self.eps)
    }
    #[inline]
    fn scale_div(self, k: f64) -> Self {
        Dual::new(self.re / k, self.eps / k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let x = 0.37;
        let d = Dual::new(x, 1.0);
        assert!((d.exp().eps - fd(f64::exp, x)).abs() < 1e-8);
        assert!((d.ln().eps - fd(f64::ln, x)).abs() < 1e-8);
        assert!((d.tanh().eps - fd(f64::tanh, x)).abs() < 1e-8);
        assert!((d.powf(2.5).eps - fd(|t| t.powf(2.5), x)).abs() < 1e-8);
        let q = (d * d + Dual::constant(1.0)) / (d - Dual::constant(2.0));
        let fq = |t: f64| (t * t + 1.0) / (t - 2.0);
        assert!((q.eps - fd(fq, x)).abs() < 1e-7);
    }
}
