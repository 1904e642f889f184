//! Scalar abstraction for probability tables.
//!
//! Box arithmetic (marginals, Collins–Gisin coordinates, wirings, principle
//! evaluators) only needs a signed ordered field, so it is written against
//! [`Scalar`] and works with `f32`, `f64` and exact rationals alike. The
//! semidefinite layer needs eigen-decompositions and runs on `f64`.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Numeric type usable as a probability.
pub trait Scalar:
    Num + Signed + PartialOrd + Clone + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Lossy conversion used when handing tables to the numerical layer.
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Conversion from a small integer ratio, exact for rationals.
    fn ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num).expect("integer fits scalar") / Self::from_i64(den).expect("integer fits scalar")
    }

    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("integer fits scalar")
    }

    /// Entry-wise tolerance comparison `|a - b| <= tol`.
    fn near(&self, other: &Self, tol: &Self) -> bool {
        (self.clone() - other.clone()).abs() <= *tol
    }
}

impl<T> Scalar for T where
    T: Num + Signed + PartialOrd + Clone + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

/// Largest of a non-empty iterator under `PartialOrd`; `zero` when empty.
pub(crate) fn max_of<T: Scalar>(it: impl IntoIterator<Item = T>) -> T {
    it.into_iter()
        .fold(None, |acc: Option<T>, v| match acc {
            Some(a) if a >= v => Some(a),
            _ => Some(v),
        })
        .unwrap_or_else(T::zero)
}
