//! Scalar abstraction for the numeric kernels.
//!
//! Agreement and polarization values are ratios of integer counts, so any
//! field-like numeric type works: `f64`/`f32` for speed, `Ratio<i64>` for
//! exact arithmetic.

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Numeric type usable in the agreement/polarization kernels.
pub trait Scalar: Num + FromPrimitive + ToPrimitive + PartialOrd + Clone {
    /// Lift a count into the scalar domain.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Lossy view as `f64`, for reporting and sorting.
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl<T: Num + FromPrimitive + ToPrimitive + PartialOrd + Clone> Scalar for T {}
