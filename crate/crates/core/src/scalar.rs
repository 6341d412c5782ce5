use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::num::ParseFloatError;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the numeric core is generic over.
///
/// `Display` on the implementors must print the shortest string that parses
/// back to the same value (true for `f32`/`f64` since Rust 1.0 formatting);
/// every text serialization format in this crate relies on that round-trip.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + Sum
    + Display
    + Debug
    + Default
    + FromStr<Err = ParseFloatError>
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub fn cast<F: Scalar>(v: f64) -> F {
    F::from_f64(v).expect("f64 constant must be representable in the scalar type")
}
