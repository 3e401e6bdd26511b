//! Scalar abstraction shared by plain evaluation and forward-mode
//! differentiation of expressions.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Numeric type an [`Expr`](crate::expr::Expr) can be evaluated over.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// Primal part.
    fn re(self) -> f64;
    /// True when the value carries no derivative information.
    fn is_constant(self) -> bool;
    fn is_finite(self) -> bool;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, y: f64) -> Self;
    /// `self^y` through `exp(y ln self)`; only valid for a positive base.
    fn pow(self, y: Self) -> Self;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn re(self) -> f64 {
        self
    }
    fn is_constant(self) -> bool {
        true
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, y: f64) -> Self {
        f64::powf(self, y)
    }
    fn pow(self, y: Self) -> Self {
        f64::powf(self, y)
    }
}

/// First-order dual number `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Dual { re, eps }
    }

    pub fn variable(re: f64) -> Self {
        Dual { re, eps: 1.0 }
    }

    pub fn constant(re: f64) -> Self {
        Dual { re, eps: 0.0 }
    }

    // Chain rule that keeps a zero tangent at zero even where the local
    // derivative is infinite (sqrt at 0, say).
    #[inline]
    fn chain(self, value: f64, slope: f64) -> Self {
        let eps = if self.eps == 0.0 { 0.0 } else { self.eps * slope };
        Dual { re: value, eps }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.re + rhs.re, self.eps + rhs.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.re - rhs.re, self.eps - rhs.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.re * rhs.re, self.eps * rhs.re + self.re * rhs.eps)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let re = self.re / rhs.re;
        Dual::new(re, (self.eps - re * rhs.eps) / rhs.re)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.eps)
    }
}

impl Scalar for Dual {
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn is_constant(self) -> bool {
        self.eps == 0.0
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), 1.0 / self.re)
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn tanh(self) -> Self {
        let th = self.re.tanh();
        self.chain(th, 1.0 - th * th)
    }
    fn powi(self, n: i32) -> Self {
        let slope = if n == 0 {
            0.0
        } else {
            f64::from(n) * self.re.powi(n - 1)
        };
        self.chain(self.re.powi(n), slope)
    }
    fn powf(self, y: f64) -> Self {
        self.chain(self.re.powf(y), y * self.re.powf(y - 1.0))
    }
    fn pow(self, y: Self) -> Self {
        let value = self.re.powf(y.re);
        let ln = self.re.ln();
        let mut eps = 0.0;
        if self.eps != 0.0 {
            eps += self.eps * y.re * self.re.powf(y.re - 1.0);
        }
        if y.eps != 0.0 {
            eps += y.eps * value * ln;
        }
        Dual::new(value, eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::variable(3.0);
        let y = x * x * Dual::constant(2.0);
        assert_eq!(y, Dual::new(18.0, 12.0));
    }

    #[test]
    fn zero_tangent_survives_infinite_slope() {
        let z = Dual::constant(0.0).sqrt();
        assert_eq!(z.eps, 0.0);
        assert!(Dual::variable(0.0).sqrt().eps.is_infinite());
    }

    #[test]
    fn quotient_rule() {
        let x = Dual::variable(2.0);
        let y = Dual::constant(1.0) / x;
        assert!((y.eps + 0.25).abs() < 1e-15);
    }
}
