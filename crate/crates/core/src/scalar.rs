use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating point type the model can be evaluated in.
///
/// Training runs in `f32`; gradient checks run in `f64`.
pub trait Scalar:
    Float
    + Debug
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

/// Converts a stored `f32` vector into the working precision.
pub fn convert<T: Scalar>(v: &[f32]) -> alloc::vec::Vec<T> {
    v.iter().map(|&x| T::of(x as f64)).collect()
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

pub fn l2_norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn all_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}
