//! Real-number abstraction shared by models, search and attribution.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar used for model scores: `f32` or `f64`.
///
/// Serialization goes through `serde_json`, which writes the shortest
/// decimal that parses back to the same value, so models round-trip exactly
/// for either width.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; used for configuration constants.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 converts to every supported scalar")
    }

    fn from_count(count: usize) -> Self {
        Self::from_usize(count).expect("count converts to every supported scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("supported scalars convert to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
