use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::envelope::TargetModel;
use crate::error::{check_dim, invalid, Error, Result};
use crate::scalar::Scalar;

/// Low-rank denoising posterior `|Y - X|_F^2 / (2 sigma2) + alpha |X|_*`.
/// Matrices are flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuclearSpec<T> {
    pub rows: usize,
    pub cols: usize,
    pub alpha: T,
    pub sigma2: T,
    pub y: Vec<T>,
}

impl<T: Scalar> NuclearSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(invalid("matrix dimensions must be positive"));
        }
        if !(self.alpha > T::zero() && self.sigma2 > T::zero()) {
            return Err(invalid("nuclear-norm model needs alpha > 0 and sigma2 > 0"));
        }
        check_dim(self.rows * self.cols, self.y.len())
    }
}

/// Singular value soft thresholding of a row-major `rows x cols` matrix.
pub fn svt<T: Scalar>(x: &[T], rows: usize, cols: usize, t: T) -> Result<Vec<T>> {
    check_dim(rows * cols, x.len())?;
    let a = DMatrix::from_row_slice(rows, cols, x);
    let out = T::singular_value_threshold(&a, t).ok_or(Error::LinearAlgebra("SVD did not converge"))?;
    Ok(row_major(&out))
}

fn row_major<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    m.transpose().as_slice().to_vec()
}

#[derive(Debug, Clone)]
pub struct NuclearModel<T: Scalar> {
    spec: NuclearSpec<T>,
}

impl<T: Scalar> NuclearModel<T> {
    pub fn new(spec: NuclearSpec<T>) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &NuclearSpec<T> {
        &self.spec
    }

    /// Blended matrix and threshold whose SVT is the prox.
    pub fn subproblem(&self, x: &[T], lambda: T) -> (Vec<T>, T) {
        let s2 = self.spec.sigma2;
        let denom = lambda + s2;
        let b = x.iter().zip(&self.spec.y).map(|(xi, yi)| (lambda * *yi + s2 * *xi) / denom).collect();
        (b, self.spec.alpha * lambda * s2 / denom)
    }

    pub fn nuclear_norm(&self, x: &[T]) -> T {
        let a = DMatrix::from_row_slice(self.spec.rows, self.spec.cols, x);
        match T::singular_values(&a) {
            Some(s) => s.into_iter().sum(),
            None => T::nan(),
        }
    }
}

/// Prox of the nuclear-norm potential.
pub fn prox_nuclear<T: Scalar>(model: &NuclearModel<T>, x: &[T], lambda: T) -> Result<Vec<T>> {
    check_dim(model.spec.y.len(), x.len())?;
    let (b, t) = model.subproblem(x, lambda);
    svt(&b, model.spec.rows, model.spec.cols, t)
}

impl<T: Scalar> TargetModel<T> for NuclearModel<T> {
    fn dim(&self) -> usize {
        self.spec.rows * self.spec.cols
    }

    fn potential(&self, x: &[T]) -> T {
        let fit: T = x.iter().zip(&self.spec.y).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
        fit / (T::of(2.0) * self.spec.sigma2) + self.spec.alpha * self.nuclear_norm(x)
    }

    fn prox(&self, x: &[T], lambda: T) -> Result<Vec<T>> {
        prox_nuclear(self, x, lambda)
    }

    /// The envelope Hessian changes where a singular value of the blended
    /// matrix crosses the threshold; the blend is `sigma2 / (lambda + sigma2)`
    /// Lipschitz in `x` and singular values are 1-Lipschitz.
    fn kink_distance(&self, x: &[T], lambda: T) -> Option<T> {
        let (b, t) = self.subproblem(x, lambda);
        let s = T::singular_values(&DMatrix::from_row_slice(self.spec.rows, self.spec.cols, &b))?;
        let gap = s.iter().map(|v| (*v - t).abs()).fold(T::infinity(), T::min);
        Some(gap * (lambda + self.spec.sigma2) / self.spec.sigma2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svt_diagonal() {
        let out = svt(&[3.0f64, 0.0, 0.0, 1.0], 2, 2, 2.0).unwrap();
        let want = [1.0, 0.0, 0.0, 0.0];
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn svt_zero_threshold_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..12).map(|_| f64::standard_normal(&mut rng)).collect();
        let out = svt(&x, 4, 3, 0.0).unwrap();
        let err: f64 = x.iter().zip(&out).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(err <= 1e-10);
    }

    #[test]
    fn blend_at_data_is_data() {
        let y = vec![1.0f64, 2.0, 3.0, 4.0];
        let m = NuclearModel::new(NuclearSpec { rows: 2, cols: 2, alpha: 115.0, sigma2: 0.01, y: y.clone() }).unwrap();
        let (b, t) = m.subproblem(&y, 1e-4);
        for (a, c) in b.iter().zip(&y) {
            assert!((a - c).abs() < 1e-14);
        }
        assert!((t - 115.0 * 1e-4 * 0.01 / (1e-4 + 0.01)).abs() < 1e-15);
    }

    #[test]
    fn potential_at_data_is_penalty() {
        let y = vec![3.0f64, 0.0, 0.0, 1.0];
        let m = NuclearModel::new(NuclearSpec { rows: 2, cols: 2, alpha: 2.0, sigma2: 0.5, y: y.clone() }).unwrap();
        assert!((m.potential(&y) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn prox_shrinks_nuclear_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..30).map(|_| f64::standard_normal(&mut rng)).collect();
        let m = NuclearModel::new(NuclearSpec { rows: 6, cols: 5, alpha: 3.0, sigma2: 0.2, y }).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..30).map(|_| f64::standard_normal(&mut rng)).collect();
            let (b, _) = m.subproblem(&x, 0.1);
            let p = m.prox(&x, 0.1).unwrap();
            assert!(m.nuclear_norm(&p) <= m.nuclear_norm(&b) + 1e-12);
        }
    }
}
