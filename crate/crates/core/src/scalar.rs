//! Scalar abstractions shared by the numeric modules.
//!
//! [`Scalar`] is the minimum needed for voting and metric arithmetic and is
//! satisfied by both floats and exact rationals (`num_rational::Ratio<i64>`),
//! which lets the same voting code be checked against exact fractions.
//! [`Real`] adds transcendental functions for the trainable models.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

pub trait Scalar: Num + PartialOrd + Clone + Debug + FromPrimitive {}

impl<T> Scalar for T where T: Num + PartialOrd + Clone + Debug + FromPrimitive {}

pub trait Real: Scalar + Float + ToPrimitive + Copy + Send + Sync + 'static {
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    /// Logistic function, computed without overflow for large |x|.
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// `ln(1 + exp(x))` without overflow.
    fn softplus(self) -> Self {
        if self > Self::zero() {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Arithmetic mean of a non-empty slice.
pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let n = T::from_usize(values.len())?;
    let sum = values.iter().cloned().fold(T::zero(), |acc, v| acc + v);
    Some(sum / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(1000.0f64.sigmoid(), 1.0);
        assert_eq!((-1000.0f64).sigmoid(), 0.0);
        assert_eq!(0.0f64.sigmoid(), 0.5);
        assert!((3.0f32.sigmoid() - 0.952_574_1).abs() < 1e-6);
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for x in [-20.0f64, -1.0, 0.0, 0.5, 20.0] {
            let naive = (1.0 + x.exp()).ln();
            assert!((x.softplus() - naive).abs() < 1e-12);
        }
        assert_eq!(800.0f64.softplus(), 800.0);
    }

    #[test]
    fn mean_of_empty_is_none() {
        assert_eq!(mean::<f64>(&[]), None);
        assert_eq!(mean(&[1.0, 2.0, 4.5]), Some(2.5));
    }
}
