//! Scalar abstraction the numerical core is generic over.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar used by the physics and control code.
///
/// Bundles IEEE arithmetic with conversion from `f64` literals and
/// printable output for diagnostics. Implemented for `f32` and `f64`;
/// the crate-root aliases pin `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum<Self> + fmt::Debug + fmt::Display + Default + 'static
{
    /// Converts an `f64` literal. In-range constants always succeed.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// Widening conversion used by telemetry and diagnostics.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
