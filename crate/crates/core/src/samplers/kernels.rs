//! Single-step Metropolis-Hastings kernels.

use rand::Rng;

use crate::envelope::{log_weight_from, EnvelopePoint, EnvelopeView, TargetModel};
use crate::error::Result;
use crate::scalar::{dist_sq, dot, log1p_exp, norm_sq, Scalar};

/// Current point with cached potential, envelope value and envelope gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<T> {
    pub x: Vec<T>,
    /// `psi(x)`
    pub potential: T,
    /// `psi^lambda(x)`
    pub envelope: T,
    /// `grad psi^lambda(x)`
    pub grad: Vec<T>,
}

impl<T: Scalar> ChainState<T> {
    pub fn new<M: TargetModel<T> + ?Sized>(view: &EnvelopeView<'_, T, M>, x: Vec<T>) -> Result<Self> {
        let point = view.evaluate(&x)?;
        let potential = view.model().potential(&x);
        Ok(Self { x, potential, envelope: point.value, grad: point.grad })
    }

    pub fn log_weight(&self) -> T {
        log_weight_from(self.envelope, self.potential)
    }

    fn accept_point(&mut self, x: Vec<T>, point: EnvelopePoint<T>, potential: T) {
        self.x = x;
        self.envelope = point.value;
        self.grad = point.grad;
        self.potential = potential;
    }
}

/// Which density the Metropolis correction targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Invariant {
    Envelope,
    Target,
}

fn accept<T: Scalar, R: Rng + ?Sized>(log_ratio: T, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= T::zero() || T::unit_uniform(rng).ln() < log_ratio
}

fn langevin_mean<T: Scalar>(x: &[T], grad: &[T], h: T) -> Vec<T> {
    let half = h / T::of(2.0);
    x.iter().zip(grad).map(|(xi, gi)| *xi - half * *gi).collect()
}

pub(crate) fn mala_step<T, M, R>(
    state: &mut ChainState<T>,
    view: &EnvelopeView<'_, T, M>,
    h: T,
    invariant: Invariant,
    rng: &mut R,
) -> Result<bool>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
    R: Rng + ?Sized,
{
    let sd = h.sqrt();
    let forward_mean = langevin_mean(&state.x, &state.grad, h);
    let y: Vec<T> = forward_mean.iter().map(|m| *m + sd * T::standard_normal(rng)).collect();

    let y_potential = match invariant {
        Invariant::Target => {
            let p = view.model().potential(&y);
            if p == T::infinity() {
                return Ok(false);
            }
            Some(p)
        }
        Invariant::Envelope => None,
    };
    let point = view.evaluate(&y)?;
    let backward_mean = langevin_mean(&y, &point.grad, h);
    let two_h = T::of(2.0) * h;
    let log_q_forward = -dist_sq(&y, &forward_mean) / two_h;
    let log_q_backward = -dist_sq(&state.x, &backward_mean) / two_h;
    let log_density_ratio = match y_potential {
        Some(p) => state.potential - p,
        None => state.envelope - point.value,
    };
    if !accept(log_density_ratio + log_q_backward - log_q_forward, rng) {
        return Ok(false);
    }
    let potential = y_potential.unwrap_or_else(|| view.model().potential(&y));
    state.accept_point(y, point, potential);
    Ok(true)
}

/// Proposal of the Langevin kernels: `x - (h/2) grad + sqrt(h) N(0, I)`.
pub fn my_mala_step<T, M, R>(state: &mut ChainState<T>, view: &EnvelopeView<'_, T, M>, h: T, rng: &mut R) -> Result<bool>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
    R: Rng + ?Sized,
{
    mala_step(state, view, h, Invariant::Envelope, rng)
}

/// Langevin proposal on the envelope, corrected towards the exact target.
pub fn p_mala_step<T, M, R>(state: &mut ChainState<T>, view: &EnvelopeView<'_, T, M>, h: T, rng: &mut R) -> Result<bool>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
    R: Rng + ?Sized,
{
    mala_step(state, view, h, Invariant::Target, rng)
}

/// Leapfrog integration of `L` steps with unit mass.
///
/// `grad_at` returns the gradient at a position plus any data the caller
/// wants back for the final position. `grad0` is the gradient at `x0`.
/// Returns `None` if a non-finite value appears along the trajectory.
pub fn leapfrog<T, E, F>(
    x0: &[T],
    z0: &[T],
    grad0: &[T],
    eps: T,
    steps: usize,
    mut grad_at: F,
) -> Result<Option<(Vec<T>, Vec<T>, E)>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<(Vec<T>, E)>,
{
    assert!(steps >= 1, "leapfrog needs at least one step");
    let half = eps / T::of(2.0);
    let mut x = x0.to_vec();
    let mut z: Vec<T> = z0.iter().zip(grad0).map(|(zi, gi)| *zi - half * *gi).collect();
    let mut last = None;
    for step in 0..steps {
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += eps * *zi;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let (g, extra) = grad_at(&x)?;
        let kick = if step + 1 == steps { half } else { eps };
        for (zi, gi) in z.iter_mut().zip(&g) {
            *zi -= kick * *gi;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        last = Some(extra);
    }
    Ok(last.map(|e| (x, z, e)))
}

pub(crate) fn hmc_step<T, M, R>(
    state: &mut ChainState<T>,
    view: &EnvelopeView<'_, T, M>,
    eps: T,
    steps: usize,
    invariant: Invariant,
    rng: &mut R,
) -> Result<bool>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
    R: Rng + ?Sized,
{
    let z0: Vec<T> = (0..state.x.len()).map(|_| T::standard_normal(rng)).collect();
    let end = leapfrog(&state.x, &z0, &state.grad, eps, steps, |x| {
        let p = view.evaluate(x)?;
        Ok((p.grad.clone(), p))
    })?;
    let Some((x, z, point)) = end else {
        return Ok(false);
    };
    let half = T::of(0.5);
    let (h0, h1, potential) = match invariant {
        Invariant::Envelope => (state.envelope, point.value, None),
        Invariant::Target => {
            let p = view.model().potential(&x);
            (state.potential, p, Some(p))
        }
    };
    let delta = (h1 + half * norm_sq(&z)) - (h0 + half * norm_sq(&z0));
    if !delta.is_finite() || !accept(-delta, rng) {
        return Ok(false);
    }
    let potential = potential.unwrap_or_else(|| view.model().potential(&x));
    state.accept_point(x, point, potential);
    Ok(true)
}

pub fn my_hmc_step<T, M, R>(
    state: &mut ChainState<T>,
    view: &EnvelopeView<'_, T, M>,
    eps: T,
    steps: usize,
    rng: &mut R,
) -> Result<bool>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
    R: Rng + ?Sized,
{
    hmc_step(state, view, eps, steps, Invariant::Envelope, rng)
}

/// HMC whose trajectories follow the envelope gradient and whose accept step
/// uses the exact potential.
pub fn p_hmc_step<T, M, R>(
    state: &mut ChainState<T>,
    view: &EnvelopeView<'_, T, M>,
    eps: T,
    steps: usize,
    rng: &mut R,
) -> Result<bool>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
    R: Rng + ?Sized,
{
    hmc_step(state, view, eps, steps, Invariant::Target, rng)
}

/// Probability of keeping the sign of the increment `z`:
/// `1 / (1 + exp(z' grad psi^lambda(x)))`.
pub fn barker_keep_probability<T: Scalar>(z: &[T], grad: &[T]) -> T {
    (-log1p_exp(dot(z, grad))).exp()
}

/// Barker proposal on the envelope: `y = x + b z` with `z ~ N(0, h I)` and a
/// single sign `b` chosen by the local gradient.
pub fn my_barker_step<T, M, R>(state: &mut ChainState<T>, view: &EnvelopeView<'_, T, M>, h: T, rng: &mut R) -> Result<bool>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
    R: Rng + ?Sized,
{
    let sd = h.sqrt();
    let mut z: Vec<T> = (0..state.x.len()).map(|_| sd * T::standard_normal(rng)).collect();
    if T::unit_uniform(rng) >= barker_keep_probability(&z, &state.grad) {
        z.iter_mut().for_each(|v| *v = -*v);
    }
    let y: Vec<T> = state.x.iter().zip(&z).map(|(a, b)| *a + *b).collect();
    let point = view.evaluate(&y)?;
    // log q(y, x) - log q(x, y), with y - x = z.
    let log_q_ratio = log1p_exp(dot(&z, &state.grad)) - log1p_exp(-dot(&z, &point.grad));
    if !accept(state.envelope - point.value + log_q_ratio, rng) {
        return Ok(false);
    }
    let potential = view.model().potential(&y);
    state.accept_point(y, point, potential);
    Ok(true)
}
