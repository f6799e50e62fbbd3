//! Floating-point abstraction shared by the numerical modules.
//!
//! The neural toolkit, the forward algorithm and the propulsion model are
//! written against [`Scalar`] so they run in either `f32` (fast training) or
//! `f64` (gradient checks, exact inference).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal; every value used in this crate is representable.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Type tag written into checkpoints.
    fn type_name() -> &'static str;
}

impl Scalar for f32 {
    fn type_name() -> &'static str {
        "f32"
    }
}

impl Scalar for f64 {
    fn type_name() -> &'static str {
        "f64"
    }
}
