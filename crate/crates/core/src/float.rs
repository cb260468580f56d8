//! Scalar abstraction: every floating-point computation in this crate is
//! generic over [`Real`], implemented for `f32` and `f64`.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Convert an `f64` constant into the generic scalar type.
#[inline]
pub fn fl<F: Real>(v: f64) -> F {
    F::from_f64(v).expect("f64 constant representable in scalar type")
}

/// Widen a scalar to `f64` (exact for both supported types).
#[inline]
pub fn to_f64<F: Real>(v: F) -> f64 {
    v.to_f64().expect("scalar convertible to f64")
}
