//! Scalar traits the tree and statistics code are generic over.

use std::fmt::{Debug, Display};
use std::hash::Hash;
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, PrimInt, Signed, ToPrimitive};
use rand::distributions::uniform::SampleUniform;

/// Integer type usable as a ListOps atom.
///
/// `i64` is the default everywhere (see [`crate::Ast`]); narrower widths are
/// fine as long as `atom_max × MAX_BRANCH^MAX_OPS` fits.
pub trait AtomScalar:
    PrimInt
    + Signed
    + ToPrimitive
    + FromPrimitive
    + FromStr
    + Display
    + Debug
    + Hash
    + Sum
    + SampleUniform
    + Send
    + Sync
    + 'static
{
}

impl<T> AtomScalar for T where
    T: PrimInt
        + Signed
        + ToPrimitive
        + FromPrimitive
        + FromStr
        + Display
        + Debug
        + Hash
        + Sum
        + SampleUniform
        + Send
        + Sync
        + 'static
{
}

/// floating point: f32 or f64
pub trait RealScalar: Float + FromPrimitive + Debug + Send + Sync + 'static {}

impl RealScalar for f32 {}
impl RealScalar for f64 {}
