//! Numeric abstraction shared by plain evaluation (`f64`), forward-mode
//! directional derivatives ([`Dual`]) and taped reverse mode
//! ([`crate::autodiff::Var`]).
//!
//! Every decision that branches (ReLU masks, line-search acceptance, bound
//! clamping) reads [`Scalar::value`], so all three number types follow the
//! same control flow and produce bit-identical primal values.

use core::fmt::Debug;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::math;

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
{
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    /// True only when the value and every derivative it carries are zero.
    fn is_exact_zero(self) -> bool;

    fn relu(self) -> Self {
        if self.value() > 0.0 {
            self
        } else {
            Self::zero()
        }
    }

    /// Hard clamp; the derivative is 1 strictly inside the interval and 0 outside.
    fn clamp_to(self, lo: f64, hi: f64) -> Self {
        let v = self.value();
        if v < lo {
            Self::constant(lo)
        } else if v > hi {
            Self::constant(hi)
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        math::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        math::ln(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        math::tanh(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        math::sqrt(self)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        math::sigmoid(self)
    }
    #[inline]
    fn softplus(self) -> Self {
        math::softplus(self)
    }
    #[inline]
    fn is_exact_zero(self) -> bool {
        self == 0.0
    }
}

/// First-order dual number `re + du·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub const fn new(re: f64, du: f64) -> Self {
        Self { re, du }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.du + o.du)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.du - o.du)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.du + self.du * o.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let q = self.re / o.re;
        Dual::new(q, (self.du - q * o.du) / o.re)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.du)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: f64) -> Dual {
        Dual::new(self.re + o, self.du)
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: f64) -> Dual {
        Dual::new(self.re - o, self.du)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: f64) -> Dual {
        Dual::new(self.re * o, self.du * o)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        self.re += o.re;
        self.du += o.du;
    }
}

impl Scalar for Dual {
    #[inline]
    fn constant(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    #[inline]
    fn value(self) -> f64 {
        self.re
    }
    fn exp(self) -> Self {
        let e = math::exp(self.re);
        Dual::new(e, e * self.du)
    }
    fn ln(self) -> Self {
        Dual::new(math::ln(self.re), self.du / self.re)
    }
    fn tanh(self) -> Self {
        let t = math::tanh(self.re);
        Dual::new(t, (1.0 - t * t) * self.du)
    }
    fn sqrt(self) -> Self {
        let s = math::sqrt(self.re);
        Dual::new(s, 0.5 * self.du / s)
    }
    fn sigmoid(self) -> Self {
        let s = math::sigmoid(self.re);
        Dual::new(s, s * (1.0 - s) * self.du)
    }
    fn softplus(self) -> Self {
        Dual::new(math::softplus(self.re), math::sigmoid(self.re) * self.du)
    }
    #[inline]
    fn is_exact_zero(self) -> bool {
        self.re == 0.0 && self.du == 0.0
    }
}
