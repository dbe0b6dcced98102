use nalgebra::{DMatrix, DVector};

use crate::envelope::TargetModel;
use crate::error::{check_dim, invalid, Error, Result};
use crate::scalar::{dot, Scalar};

/// Centered Gaussian target `N(0, Omega)`, `psi(x) = x' Omega^{-1} x / 2`.
#[derive(Debug, Clone)]
pub struct GaussianModel<T: Scalar> {
    omega: DMatrix<T>,
    precision: DMatrix<T>,
}

impl<T: Scalar> GaussianModel<T> {
    /// Fails unless `omega` is symmetric positive definite.
    pub fn new(omega: DMatrix<T>) -> Result<Self> {
        if omega.nrows() != omega.ncols() || omega.nrows() == 0 {
            return Err(invalid("covariance must be a non-empty square matrix"));
        }
        let tol = T::of(1e-10);
        for i in 0..omega.nrows() {
            for j in 0..i {
                let (a, b) = (omega[(i, j)], omega[(j, i)]);
                if (a - b).abs() > tol * (T::one() + a.abs().max(b.abs())) {
                    return Err(invalid("covariance must be symmetric"));
                }
            }
        }
        let precision = T::spd_inverse(&omega)
            .ok_or_else(|| invalid("covariance is not positive definite"))?;
        Ok(Self { omega, precision })
    }

    pub fn isotropic(dim: usize, variance: T) -> Result<Self> {
        Self::new(DMatrix::from_diagonal_element(dim, dim, variance))
    }

    pub fn diagonal(variances: &[T]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(variances)))
    }

    pub fn omega(&self) -> &DMatrix<T> {
        &self.omega
    }

    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        let mut s = T::symmetric_eigenvalues(&self.omega)
            .ok_or(Error::LinearAlgebra("symmetric eigendecomposition failed"))?;
        s.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        Ok(s)
    }
}

/// `(lambda Omega^{-1} + I)^{-1} x`, computed as `(Omega + lambda I)^{-1} Omega x`.
pub fn prox_gaussian<T: Scalar>(x: &[T], omega: &DMatrix<T>, lambda: T) -> Result<Vec<T>> {
    check_dim(omega.nrows(), x.len())?;
    let shifted = omega + DMatrix::from_diagonal_element(x.len(), x.len(), lambda);
    let rhs = omega * DVector::from_column_slice(x);
    let sol = T::spd_solve(&shifted, &rhs).ok_or(Error::LinearAlgebra("Omega + lambda I not positive definite"))?;
    Ok(sol.iter().copied().collect())
}

impl<T: Scalar> TargetModel<T> for GaussianModel<T> {
    fn dim(&self) -> usize {
        self.omega.nrows()
    }

    fn potential(&self, x: &[T]) -> T {
        let px = &self.precision * DVector::from_column_slice(x);
        dot(x, px.as_slice()) / T::of(2.0)
    }

    fn prox(&self, x: &[T], lambda: T) -> Result<Vec<T>> {
        prox_gaussian(x, &self.omega, lambda)
    }

    fn exact_grad(&self, x: &[T]) -> Option<Vec<T>> {
        let px = &self.precision * DVector::from_column_slice(x);
        Some(px.iter().copied().collect())
    }

    fn kink_distance(&self, _x: &[T], _lambda: T) -> Option<T> {
        Some(T::infinity())
    }
}
