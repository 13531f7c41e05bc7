use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};

/// Floating-point type the energy model and the trainer are generic over.
///
/// `Display` must print the shortest string that parses back to the same
/// value, which holds for `f32` and `f64`; model files rely on it.
pub trait Scalar:
    Float + FromPrimitive + FromStr + Display + Debug + Default + Send + Sync + Sum + 'static
{
    /// Lossless for counts below 2^53 (2^24 for `f32`).
    fn from_count(n: u64) -> Self {
        <Self as FromPrimitive>::from_u64(n).expect("u64 converts to a float")
    }

    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 converts to a float")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("float converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
