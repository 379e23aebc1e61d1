//! Floating point abstraction shared by the embedding trainer, the
//! similarity features and the MLP combiner.

use std::fmt::{Debug, Display};
use std::io::{self, Read, Write};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// A real scalar usable for training and scoring.
///
/// Implemented for `f32` (the default for embedding tables) and `f64`
/// (used where gradients are checked numerically).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
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
    /// Tag written into model headers.
    const NAME: &'static str;
    /// Byte width of one serialized value.
    const WIDTH: usize;

    fn write_le<W: Write>(self, w: &mut W) -> io::Result<()>;
    fn read_le<R: Read>(r: &mut R) -> io::Result<Self>;

    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("every Scalar converts to f64")
    }
}

macro_rules! impl_scalar {
    ($t:ty, $name:expr, $width:expr) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;
            const WIDTH: usize = $width;

            fn write_le<W: Write>(self, w: &mut W) -> io::Result<()> {
                w.write_all(&self.to_le_bytes())
            }

            fn read_le<R: Read>(r: &mut R) -> io::Result<Self> {
                let mut buf = [0u8; $width];
                r.read_exact(&mut buf)?;
                Ok(<$t>::from_le_bytes(buf))
            }
        }
    };
}

impl_scalar!(f32, "f32", 4);
impl_scalar!(f64, "f64", 8);

#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine_of<F: Scalar>(a: &[F], b: &[F]) -> Option<F> {
    let denom = norm(a) * norm(b);
    if denom <= F::zero() || !denom.is_finite() {
        return None;
    }
    let c = dot(a, b) / denom;
    Some(c.max(-F::one()).min(F::one()))
}

#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}
