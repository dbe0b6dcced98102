use serde::{Deserialize, Serialize};

use crate::envelope::TargetModel;
use crate::error::{check_dim, invalid, Error, Result};
use crate::scalar::{dist_sq, norm_sq, Scalar};

/// Hierarchical Poisson model: `y_ij ~ Poisson(exp(eta_i))`,
/// `eta_i ~ N(mu, sigma_eta2)`, `mu ~ N(0, c2)`. The state is
/// `(eta_1, ..., eta_I, mu)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonSpec<T> {
    /// `counts[i]` holds the observations of class `i`.
    pub counts: Vec<Vec<u64>>,
    pub sigma_eta2: T,
    pub c2: T,
    pub newton_tol: T,
    pub newton_max_iter: usize,
}

impl<T: Scalar> PoissonSpec<T> {
    pub fn new(counts: Vec<Vec<u64>>, sigma_eta2: T, c2: T) -> Self {
        Self { counts, sigma_eta2, c2, newton_tol: T::of(1e-10), newton_max_iter: 100 }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.is_empty() {
            return Err(invalid("Poisson model needs at least one class"));
        }
        if !(self.sigma_eta2 > T::zero() && self.c2 > T::zero()) {
            return Err(invalid("Poisson model needs sigma_eta2 > 0 and c2 > 0"));
        }
        if !(self.newton_tol > T::zero()) || self.newton_max_iter == 0 {
            return Err(invalid("Newton tolerance and iteration cap must be positive"));
        }
        Ok(())
    }
}

/// Diagnostics of the last Newton solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonReport<T> {
    pub iterations: usize,
    pub grad_norm: T,
}

#[derive(Debug, Clone)]
pub struct PoissonModel<T: Scalar> {
    spec: PoissonSpec<T>,
    sizes: Vec<T>,
    sums: Vec<T>,
}

impl<T: Scalar> PoissonModel<T> {
    pub fn new(spec: PoissonSpec<T>) -> Result<Self> {
        spec.validate()?;
        let sizes = spec.counts.iter().map(|c| T::of(c.len() as f64)).collect();
        let sums = spec
            .counts
            .iter()
            .map(|c| T::of(c.iter().map(|v| *v as f64).sum::<f64>()))
            .collect();
        Ok(Self { spec, sizes, sums })
    }

    pub fn spec(&self) -> &PoissonSpec<T> {
        &self.spec
    }

    fn classes(&self) -> usize {
        self.sizes.len()
    }

    fn mu_curvature(&self) -> T {
        T::of(self.classes() as f64) / self.spec.sigma_eta2 + self.spec.c2.recip()
    }

    /// `f_u(v) = psi(v) + |v - u|^2 / (2 lambda)`.
    pub fn prox_objective(&self, v: &[T], u: &[T], lambda: T) -> T {
        self.potential(v) + dist_sq(v, u) / (T::of(2.0) * lambda)
    }

    /// `grad psi(v) + (v - u) / lambda`.
    pub fn prox_objective_grad(&self, v: &[T], u: &[T], lambda: T) -> Vec<T> {
        let mut g = self.gradient(v);
        for ((gi, vi), ui) in g.iter_mut().zip(v).zip(u) {
            *gi += (*vi - *ui) / lambda;
        }
        g
    }

    fn gradient(&self, v: &[T]) -> Vec<T> {
        let n = self.classes();
        let (eta, mu) = (&v[..n], v[n]);
        let s2 = self.spec.sigma_eta2;
        let mut g: Vec<T> = eta
            .iter()
            .zip(&self.sizes)
            .zip(&self.sums)
            .map(|((e, ni), si)| *e / s2 - mu / s2 + *ni * e.exp() - *si)
            .collect();
        let eta_sum: T = eta.iter().copied().sum();
        g.push(mu * self.mu_curvature() - eta_sum / s2);
        g
    }

    /// Prox by alternating a diagonal Newton step on `eta` with the exact
    /// `mu` update, halving steps that increase the objective.
    pub fn prox_with_report(&self, u: &[T], lambda: T) -> Result<(Vec<T>, NewtonReport<T>)> {
        check_dim(self.dim(), u.len())?;
        if !(lambda > T::zero()) {
            return Err(invalid("lambda must be positive"));
        }
        let n = self.classes();
        let s2 = self.spec.sigma_eta2;
        let inv_l = lambda.recip();
        let mu_denom = self.mu_curvature() + inv_l;
        let mu_update = |eta: &[T]| {
            let eta_sum: T = eta.iter().copied().sum();
            (eta_sum / s2 + u[n] * inv_l) / mu_denom
        };
        let tiny = T::of(4.0) * T::epsilon();

        let mut v = u.to_vec();
        let mut f = self.prox_objective(&v, u, lambda);
        let mut grad_norm = T::infinity();
        for it in 0..self.spec.newton_max_iter {
            let g = self.prox_objective_grad(&v, u, lambda);
            grad_norm = norm_sq(&g).sqrt();
            if grad_norm < self.spec.newton_tol {
                return Ok((v, NewtonReport { iterations: it, grad_norm }));
            }
            let mut step = Vec::with_capacity(n);
            for i in 0..n {
                let h = s2.recip() + self.sizes[i] * v[i].exp() + inv_l;
                if !h.is_finite() {
                    return Err(Error::NonFiniteHessian { class: i });
                }
                step.push(g[i] / h);
            }
            let slack = tiny * f.abs();
            let mut t = T::one();
            let mut cand = v.clone();
            for _ in 0..=30 {
                for i in 0..n {
                    cand[i] = v[i] - t * step[i];
                }
                cand[n] = mu_update(&cand[..n]);
                let fc = self.prox_objective(&cand, u, lambda);
                if fc <= f + slack {
                    f = fc;
                    break;
                }
                t = t / T::of(2.0);
            }
            let moved = dist_sq(&cand, &v).sqrt();
            let scale = T::one() + norm_sq(&v).sqrt();
            v = cand;
            // Steps at the rounding floor: the gradient cannot shrink further
            // in this precision (this happens for very small lambda).
            if moved <= tiny * scale {
                let g = self.prox_objective_grad(&v, u, lambda);
                return Ok((v, NewtonReport { iterations: it + 1, grad_norm: norm_sq(&g).sqrt() }));
            }
        }
        Err(Error::NotConverged {
            solver: "Poisson Newton prox",
            iterations: self.spec.newton_max_iter,
            residual: grad_norm.as_f64(),
        })
    }
}

/// Prox of the hierarchical Poisson potential.
pub fn prox_poisson<T: Scalar>(model: &PoissonModel<T>, u: &[T], lambda: T) -> Result<Vec<T>> {
    Ok(model.prox_with_report(u, lambda)?.0)
}

impl<T: Scalar> TargetModel<T> for PoissonModel<T> {
    fn dim(&self) -> usize {
        self.classes() + 1
    }

    fn potential(&self, v: &[T]) -> T {
        let n = self.classes();
        let (eta, mu) = (&v[..n], v[n]);
        let s2 = self.spec.sigma_eta2;
        let two = T::of(2.0);
        let mut total = T::zero();
        let mut eta_sum = T::zero();
        for ((e, ni), si) in eta.iter().zip(&self.sizes).zip(&self.sums) {
            total += *e * *e / (two * s2) + *ni * e.exp() - *e * *si;
            eta_sum += *e;
        }
        total - mu * eta_sum / s2 + mu * mu / two * self.mu_curvature()
    }

    fn prox(&self, u: &[T], lambda: T) -> Result<Vec<T>> {
        prox_poisson(self, u, lambda)
    }

    fn exact_grad(&self, v: &[T]) -> Option<Vec<T>> {
        Some(self.gradient(v))
    }

    fn kink_distance(&self, _x: &[T], _lambda: T) -> Option<T> {
        Some(T::infinity())
    }
}
