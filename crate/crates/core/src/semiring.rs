//! Infinitesimal numbers and their (commutative) semiring operations.
//!
//! An [`InfNum`] is a pair `(r, n)` denoting `r * eps^n` for an infinitesimally
//! small `eps > 0`. Order `n` counts the density factors picked up by
//! conditioning on zero-probability observations; ordinary probabilities live
//! at order 0. Addition keeps the dominant (lowest-order) term, multiplication
//! multiplies coefficients and adds orders.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum InfNumError {
    #[error("division by an infinitesimal number with zero real part")]
    DivisionByZero,
    #[error("infinitesimal order arithmetic overflowed")]
    OrderOverflow,
}

/// An infinitesimal number `r * eps^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfNum {
    pub real: f64,
    pub order: i32,
}

impl InfNum {
    pub const fn new(real: f64, order: i32) -> Self {
        InfNum { real, order }
    }

    /// Neutral element of addition, `(0, 0)`.
    pub const fn zero() -> Self {
        InfNum::new(0.0, 0)
    }

    /// Neutral element of multiplication, `(1, 0)`.
    pub const fn one() -> Self {
        InfNum::new(1.0, 0)
    }

    pub fn is_zero(&self) -> bool {
        self.real == 0.0
    }

    /// Semiring addition. Equal orders add coefficients (keeping the order
    /// even when the sum cancels to zero); otherwise the lower order
    /// dominates. A zero coefficient carries no scale and never dominates,
    /// which is what makes `(0,0)` the neutral element for terms of any
    /// order — the accumulator in the likelihood-weighting loop starts there.
    pub fn add(self, other: InfNum) -> InfNum {
        if self.is_zero() && other.is_zero() {
            return InfNum::new(0.0, self.order.min(other.order));
        }
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        if self.order == other.order {
            InfNum::new(self.real + other.real, self.order)
        } else if self.order < other.order {
            self
        } else {
            other
        }
    }

    /// Semiring multiplication: `(r,n) * (t,m) = (r*t, n+m)`.
    pub fn mul(self, other: InfNum) -> InfNum {
        InfNum::new(
            self.real * other.real,
            self.order
                .checked_add(other.order)
                .expect("infinitesimal order overflow"),
        )
    }

    pub fn neg(self) -> InfNum {
        InfNum::new(-self.real, self.order)
    }

    pub fn sub(self, other: InfNum) -> InfNum {
        self.add(other.neg())
    }

    /// Reciprocal; undefined when the real part is zero.
    pub fn recip(self) -> Result<InfNum, InfNumError> {
        if self.real == 0.0 {
            return Err(InfNumError::DivisionByZero);
        }
        let order = self.order.checked_neg().ok_or(InfNumError::OrderOverflow)?;
        Ok(InfNum::new(self.real.recip(), order))
    }

    pub fn div(self, other: InfNum) -> Result<InfNum, InfNumError> {
        Ok(self.mul(other.recip()?))
    }

    /// Equality up to the zero class: all numbers with zero real part denote
    /// the same (infinitely small or plain) zero, whatever their order.
    pub fn equiv(self, other: InfNum, tol: f64) -> bool {
        if self.is_zero() && other.is_zero() {
            return true;
        }
        self.order == other.order && (self.real - other.real).abs() <= tol
    }
}

impl std::fmt::Display for InfNum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.real, self.order)
    }
}

impl std::ops::Add for InfNum {
    type Output = InfNum;
    fn add(self, rhs: InfNum) -> InfNum {
        InfNum::add(self, rhs)
    }
}

impl std::ops::Mul for InfNum {
    type Output = InfNum;
    fn mul(self, rhs: InfNum) -> InfNum {
        InfNum::mul(self, rhs)
    }
}

impl std::ops::Sub for InfNum {
    type Output = InfNum;
    fn sub(self, rhs: InfNum) -> InfNum {
        InfNum::sub(self, rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_lower_order_dominates() {
        let a = InfNum::new(0.5, 1);
        let b = InfNum::new(0.3, 0);
        assert_eq!(a.add(b), InfNum::new(0.3, 0));
        assert_eq!(b.add(a), InfNum::new(0.3, 0));
    }

    #[test]
    fn add_equal_orders() {
        let a = InfNum::new(0.7 * 1.728, 1);
        let b = InfNum::new(0.3 * 0.768, 1);
        let sum = a.add(b);
        assert_eq!(sum.order, 1);
        assert!((sum.real - 1.440).abs() < 1e-12);
    }

    #[test]
    fn add_zero_is_neutral() {
        for a in [
            InfNum::new(2.5, 0),
            InfNum::new(0.4, -2),
            InfNum::new(1.728, 1),
            InfNum::new(3.0, 5),
        ] {
            assert_eq!(a.add(InfNum::zero()), a);
            assert_eq!(InfNum::zero().add(a), a);
        }
    }

    #[test]
    fn add_cancellation_keeps_order() {
        let sum = InfNum::new(0.5, 1).add(InfNum::new(-0.5, 1));
        assert_eq!(sum, InfNum::new(0.0, 1));
    }

    #[test]
    fn mul_componentwise() {
        assert_eq!(
            InfNum::new(2.0, 1).mul(InfNum::new(3.0, 2)),
            InfNum::new(6.0, 3)
        );
        // The worked circuit evaluation keeps the order of a zero product.
        assert_eq!(
            InfNum::new(0.768, 1).mul(InfNum::new(0.0, 0)),
            InfNum::new(0.0, 1)
        );
        let v = InfNum::new(1.728, 1).mul(InfNum::new(0.7, 0));
        assert_eq!(v.order, 1);
        assert!((v.real - 1.2096).abs() < 1e-12);
    }

    #[test]
    fn sub_mixed_orders() {
        // e_times - (1.728, 1) keeps the real unit: the order-1 term vanishes.
        assert_eq!(
            InfNum::one().sub(InfNum::new(1.728, 1)),
            InfNum::new(1.0, 0)
        );
    }

    #[test]
    fn div_examples() {
        let r = InfNum::new(0.2304, 1).div(InfNum::new(1.440, 1)).unwrap();
        assert_eq!(r.order, 0);
        assert!((r.real - 0.16).abs() < 1e-12);

        let x = InfNum::new(2.75, 3);
        let one = x.div(x).unwrap();
        assert_eq!(one.order, 0);
        assert!((one.real - 1.0).abs() < 1e-15);

        assert_eq!(
            InfNum::one().div(InfNum::new(0.0, 1)),
            Err(InfNumError::DivisionByZero)
        );
    }
}
