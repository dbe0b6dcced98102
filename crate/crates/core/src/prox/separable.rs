use serde::{Deserialize, Serialize};

use super::{prox_abs, prox_power4, prox_quad_l1};
use crate::envelope::TargetModel;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Coordinatewise penalty of a separable potential `psi(x) = sum_i f(x_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Penalty<T> {
    /// `|x|`
    Abs,
    /// `x^4`
    Power4,
    /// `a x^2 + b |x|`
    QuadL1 { a: T, b: T },
}

/// `psi(x) = sum_i f(x_i)`, whose prox acts coordinate by coordinate.
#[derive(Debug, Clone)]
pub struct SeparableModel<T> {
    dim: usize,
    penalty: Penalty<T>,
}

impl<T: Scalar> SeparableModel<T> {
    pub fn new(dim: usize, penalty: Penalty<T>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if let Penalty::QuadL1 { a, b } = penalty {
            if !(a > T::zero() && b > T::zero()) {
                return Err(invalid("quadratic-plus-l1 penalty needs a > 0 and b > 0"));
            }
        }
        Ok(Self { dim, penalty })
    }

    pub fn penalty(&self) -> Penalty<T> {
        self.penalty
    }

    fn term(&self, v: T) -> T {
        match self.penalty {
            Penalty::Abs => v.abs(),
            Penalty::Power4 => v.powi(4),
            Penalty::QuadL1 { a, b } => a * v * v + b * v.abs(),
        }
    }
}

impl<T: Scalar> TargetModel<T> for SeparableModel<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn potential(&self, x: &[T]) -> T {
        x.iter().map(|v| self.term(*v)).sum()
    }

    fn prox(&self, x: &[T], lambda: T) -> Result<Vec<T>> {
        Ok(match self.penalty {
            Penalty::Abs => x.iter().map(|v| prox_abs(*v, lambda)).collect(),
            Penalty::Power4 => x.iter().map(|v| prox_power4(*v, lambda)).collect(),
            Penalty::QuadL1 { a, b } => x.iter().map(|v| prox_quad_l1(*v, a, b, lambda)).collect(),
        })
    }

    fn exact_grad(&self, x: &[T]) -> Option<Vec<T>> {
        match self.penalty {
            Penalty::Power4 => Some(x.iter().map(|v| T::of(4.0) * v.powi(3)).collect()),
            _ => None,
        }
    }

    /// The envelope Hessian jumps where `|x_i|` equals the dead-zone width.
    fn kink_distance(&self, x: &[T], lambda: T) -> Option<T> {
        let edge = match self.penalty {
            Penalty::Abs => lambda,
            Penalty::Power4 => return Some(T::infinity()),
            Penalty::QuadL1 { b, .. } => lambda * b,
        };
        Some(
            x.iter()
                .map(|v| (v.abs() - edge).abs())
                .fold(T::infinity(), T::min),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potentials() {
        let m = SeparableModel::new(20, Penalty::Abs).unwrap();
        assert_eq!(m.potential(&[1.0f64; 20]), 20.0);
        let q = SeparableModel::new(2, Penalty::Power4).unwrap();
        assert_eq!(q.potential(&[2.0f64, -1.0]), 17.0);
        assert_eq!(q.exact_grad(&[1.0f64, -1.0]).unwrap(), vec![4.0, -4.0]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SeparableModel::<f64>::new(0, Penalty::Abs).is_err());
        assert!(SeparableModel::new(1, Penalty::QuadL1 { a: 0.0, b: 1.0 }).is_err());
    }

    #[test]
    fn kink_distance_for_laplace() {
        let m = SeparableModel::new(2, Penalty::Abs).unwrap();
        let d = m.kink_distance(&[0.4f64, -2.0], 0.5).unwrap();
        assert!((d - 0.1).abs() < 1e-15);
    }
}
