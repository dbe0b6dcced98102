//! Target models and their Moreau-Yosida envelopes.

use std::sync::Arc;

use crate::error::{check_dim, invalid, Error, Result};
use crate::scalar::{dist_sq, Scalar};

/// A log-concave target `pi ∝ exp(-psi)` described by its potential and
/// proximal mapping.
///
/// This is the extension point for new posteriors: implement `potential`
/// and `prox` and every sampler, estimator and tuner works unchanged.
pub trait TargetModel<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    /// `psi(x)`; may be `+inf` outside the support.
    fn potential(&self, x: &[T]) -> T;

    /// `argmin_y psi(y) + |y - x|^2 / (2 lambda)`.
    fn prox(&self, x: &[T], lambda: T) -> Result<Vec<T>>;

    /// Gradient of `psi`, for differentiable models only.
    fn exact_grad(&self, _x: &[T]) -> Option<Vec<T>> {
        None
    }

    /// Lower bound on the distance from `x` to the nearest point where the
    /// envelope gradient stops being smooth. `None` when unknown.
    fn kink_distance(&self, _x: &[T], _lambda: T) -> Option<T> {
        None
    }
}

macro_rules! forward_model {
    ($ptr:ty) => {
        impl<T: Scalar, M: TargetModel<T> + ?Sized> TargetModel<T> for $ptr {
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn potential(&self, x: &[T]) -> T {
                (**self).potential(x)
            }
            fn prox(&self, x: &[T], lambda: T) -> Result<Vec<T>> {
                (**self).prox(x, lambda)
            }
            fn exact_grad(&self, x: &[T]) -> Option<Vec<T>> {
                (**self).exact_grad(x)
            }
            fn kink_distance(&self, x: &[T], lambda: T) -> Option<T> {
                (**self).kink_distance(x, lambda)
            }
        }
    };
}

forward_model!(&M);
forward_model!(Box<M>);
forward_model!(Arc<M>);

/// Envelope quantities at one point, all derived from a single prox call.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePoint<T> {
    pub prox: Vec<T>,
    pub value: T,
    pub grad: Vec<T>,
}

/// A target model paired with a smoothing parameter.
pub struct EnvelopeView<'a, T: Scalar, M: TargetModel<T> + ?Sized> {
    model: &'a M,
    lambda: T,
}

impl<T: Scalar, M: TargetModel<T> + ?Sized> Clone for EnvelopeView<'_, T, M> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Scalar, M: TargetModel<T> + ?Sized> Copy for EnvelopeView<'_, T, M> {}

impl<'a, T: Scalar, M: TargetModel<T> + ?Sized> EnvelopeView<'a, T, M> {
    pub fn new(model: &'a M, lambda: T) -> Result<Self> {
        if !(lambda > T::zero() && lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive and finite, got {lambda}")));
        }
        Ok(Self { model, lambda })
    }

    pub fn model(&self) -> &'a M {
        self.model
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn evaluate(&self, x: &[T]) -> Result<EnvelopePoint<T>> {
        check_dim(self.model.dim(), x.len())?;
        let prox = self.model.prox(x, self.lambda)?;
        check_dim(x.len(), prox.len())?;
        let at_prox = self.model.potential(&prox);
        if !at_prox.is_finite() {
            return Err(Error::BrokenProx);
        }
        let two = T::one() + T::one();
        let value = at_prox + dist_sq(&prox, x) / (two * self.lambda);
        let grad = x
            .iter()
            .zip(&prox)
            .map(|(xi, pi)| (*xi - *pi) / self.lambda)
            .collect();
        Ok(EnvelopePoint { prox, value, grad })
    }

    pub fn envelope_value(&self, x: &[T]) -> Result<T> {
        Ok(self.evaluate(x)?.value)
    }

    pub fn envelope_grad(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.evaluate(x)?.grad)
    }

    /// `psi^lambda(x) - psi(x)`, the log of the unnormalized importance weight.
    pub fn log_weight(&self, x: &[T]) -> Result<T> {
        let potential = self.model.potential(x);
        if potential == T::infinity() {
            return Ok(T::neg_infinity());
        }
        Ok(self.envelope_value(x)? - potential)
    }
}

/// Log weight from an already evaluated envelope value and potential.
pub fn log_weight_from<T: Scalar>(envelope_value: T, potential: T) -> T {
    if potential == T::infinity() {
        T::neg_infinity()
    } else {
        envelope_value - potential
    }
}
