//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use nalgebra::{DMatrix, DVector};
use num_traits::{Float, FromPrimitive, NumAssign};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used throughout the library: `f32` or `f64`.
///
/// Dense linear algebra and random variate generation go through the
/// per-type methods below so the generic code never needs nalgebra's field
/// traits (whose method names overlap with `Float`).
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform draw on `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Solves `a x = b` for symmetric positive-definite `a`.
    fn spd_solve(a: &DMatrix<Self>, b: &DVector<Self>) -> Option<DVector<Self>>;

    fn spd_inverse(a: &DMatrix<Self>) -> Option<DMatrix<Self>>;

    fn symmetric_eigenvalues(a: &DMatrix<Self>) -> Option<Vec<Self>>;

    fn singular_values(a: &DMatrix<Self>) -> Option<Vec<Self>>;

    /// Full SVD followed by soft-thresholding of the singular values at `t`.
    fn singular_value_threshold(a: &DMatrix<Self>, t: Self) -> Option<DMatrix<Self>>;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }

            fn spd_solve(a: &DMatrix<Self>, b: &DVector<Self>) -> Option<DVector<Self>> {
                a.clone().cholesky().map(|c| c.solve(b))
            }

            fn spd_inverse(a: &DMatrix<Self>) -> Option<DMatrix<Self>> {
                a.clone().cholesky().map(|c| c.inverse())
            }

            fn symmetric_eigenvalues(a: &DMatrix<Self>) -> Option<Vec<Self>> {
                let eig = a.clone().try_symmetric_eigen(<$t>::EPSILON, 10_000)?;
                Some(eig.eigenvalues.iter().copied().collect())
            }

            fn singular_values(a: &DMatrix<Self>) -> Option<Vec<Self>> {
                let svd = a.clone().try_svd(false, false, <$t>::EPSILON, 10_000)?;
                Some(svd.singular_values.iter().copied().collect())
            }

            fn singular_value_threshold(a: &DMatrix<Self>, t: Self) -> Option<DMatrix<Self>> {
                let svd = a.clone().try_svd(true, true, <$t>::EPSILON, 10_000)?;
                let mut u = svd.u?;
                let v_t = svd.v_t?;
                for (j, s) in svd.singular_values.iter().enumerate() {
                    let shrunk = (*s - t).max(0.0);
                    u.column_mut(j).scale_mut(shrunk);
                }
                Some(u * v_t)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub(crate) fn norm_sq<T: Scalar>(a: &[T]) -> T {
    a.iter().map(|x| *x * *x).sum()
}

pub(crate) fn dist_sq<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x - *y;
            d * d
        })
        .sum()
}

/// `log(1 + exp(a))` without overflow.
pub(crate) fn log1p_exp<T: Scalar>(a: T) -> T {
    if a > T::zero() {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}
