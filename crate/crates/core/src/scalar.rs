//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// A real scalar the numeric core can run on.
///
/// Implemented for `f32` and `f64`. File formats are always 64-bit; values are
/// converted on load and save.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or intermediate.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar always converts to f64")
    }

    /// Convert a count to this scalar type.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("usize count is representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
