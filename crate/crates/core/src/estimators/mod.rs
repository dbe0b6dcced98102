//! Self-normalized importance sampling estimators and MCMC output analysis.

mod report;
mod variance;

pub use report::{EstimateReport, Functional, QuantileEstimate, QuantileRequest, StreamingEstimator};
pub use variance::{acf, batch_means_cov, default_batch_size, mcmc_ess, plugin_xi, relative_efficiency};

use crate::error::{check_dim, invalid, Error, Result};
use crate::samplers::ChainTrace;
use crate::scalar::Scalar;

/// Values `xi(X_t)` (row-major `n x p`) with their log importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample<T> {
    p: usize,
    values: Vec<T>,
    log_weights: Vec<T>,
}

impl<T: Scalar> WeightedSample<T> {
    pub fn new(values: Vec<T>, p: usize, log_weights: Vec<T>) -> Result<Self> {
        if p == 0 {
            return Err(invalid("functional dimension must be positive"));
        }
        check_dim(log_weights.len() * p, values.len())?;
        if log_weights.iter().any(|w| w.is_nan() || *w == T::infinity()) {
            return Err(invalid("log-weights must be finite or -inf"));
        }
        Ok(Self { p, values, log_weights })
    }

    /// Applies `functional` to every state of a trace.
    pub fn from_trace(trace: &ChainTrace<T>, functional: &Functional) -> Result<Self> {
        let p = functional.output_dim(trace.dim)?;
        let mut values = Vec::with_capacity(trace.len() * p);
        let mut buf = vec![T::zero(); p];
        for t in 0..trace.len() {
            functional.apply(trace.state(t), &mut buf);
            values.extend_from_slice(&buf);
        }
        Self::new(values, p, trace.log_weights.clone())
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn log_weights(&self) -> &[T] {
        &self.log_weights
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.values[t * self.p..(t + 1) * self.p]
    }

    /// Weights scaled so the largest equals one.
    pub fn scaled_weights(&self) -> Result<Vec<T>> {
        let max = self.log_weights.iter().copied().fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() {
            return Err(Error::ZeroWeights);
        }
        Ok(self.log_weights.iter().map(|w| (*w - max).exp()).collect())
    }

    fn check_component(&self, i: usize) -> Result<()> {
        if i < self.p {
            Ok(())
        } else {
            Err(invalid(format!("component {i} out of range for dimension {}", self.p)))
        }
    }
}

/// `sum_t xi(X_t) w_t / sum_t w_t`.
pub fn snis_estimate<T: Scalar>(ws: &WeightedSample<T>) -> Result<Vec<T>> {
    let w = ws.scaled_weights()?;
    let total: T = w.iter().copied().sum();
    let mut theta = vec![T::zero(); ws.p];
    for (t, wt) in w.iter().enumerate() {
        for (acc, v) in theta.iter_mut().zip(ws.row(t)) {
            *acc += *wt * *v;
        }
    }
    theta.iter_mut().for_each(|v| *v /= total);
    Ok(theta)
}

/// Weighted empirical CDF of component `i` at `s`.
pub fn weighted_cdf<T: Scalar>(ws: &WeightedSample<T>, i: usize, s: T) -> Result<T> {
    ws.check_component(i)?;
    let w = ws.scaled_weights()?;
    let total: T = w.iter().copied().sum();
    let below: T = w.iter().enumerate().filter(|(t, _)| ws.row(*t)[i] <= s).map(|(_, v)| *v).sum();
    Ok((below / total).min(T::one()))
}

/// First order statistic of component `i` whose cumulative relative weight
/// reaches `alpha`; the minimum for `alpha = 0`.
pub fn weighted_quantile<T: Scalar>(ws: &WeightedSample<T>, i: usize, alpha: T) -> Result<T> {
    ws.check_component(i)?;
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(invalid(format!("quantile level must lie in [0, 1], got {alpha}")));
    }
    let w = ws.scaled_weights()?;
    let mut pairs: Vec<(T, T)> = (0..ws.len()).map(|t| (ws.row(t)[i], w[t])).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("quantiles of NaN values"));
    Ok(quantile_of_sorted(&pairs, alpha))
}

pub(crate) fn quantile_of_sorted<T: Scalar>(sorted: &[(T, T)], alpha: T) -> T {
    if alpha == T::zero() {
        return sorted[0].0;
    }
    let total: T = sorted.iter().map(|p| p.1).sum();
    let mut cum = T::zero();
    for (v, w) in sorted {
        cum += *w / total;
        if cum >= alpha {
            return *v;
        }
    }
    sorted[sorted.len() - 1].0
}

/// Kong's effective sample size `n (mean w)^2 / mean(w^2)`.
pub fn kong_ess<T: Scalar>(ws: &WeightedSample<T>) -> Result<T> {
    kong_ess_from_log_weights(ws.log_weights())
}

pub fn kong_ess_from_log_weights<T: Scalar>(log_weights: &[T]) -> Result<T> {
    let max = log_weights.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return Err(Error::ZeroWeights);
    }
    let (s1, s2) = log_weights.iter().fold((T::zero(), T::zero()), |(a, b), lw| {
        let w = (*lw - max).exp();
        (a + w, b + w * w)
    });
    Ok(s1 * s1 / s2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(values: Vec<f64>, lw: Vec<f64>) -> WeightedSample<f64> {
        WeightedSample::new(values, 1, lw).unwrap()
    }

    #[test]
    fn snis_examples() {
        let ws = sample(vec![0.0, 1.0], vec![0.0, -0.25]);
        let want = (-0.25f64).exp() / (1.0 + (-0.25f64).exp());
        assert!((snis_estimate(&ws).unwrap()[0] - want).abs() < 1e-15);
        assert!((want - 0.43782).abs() < 1e-5);
        let eq = sample(vec![1.0, 2.0, 6.0], vec![-3.0; 3]);
        assert!((snis_estimate(&eq).unwrap()[0] - 3.0).abs() < 1e-15);
        let c = sample(vec![2.5; 4], vec![0.0, -1.0, -7.0, -0.1]);
        assert!((snis_estimate(&c).unwrap()[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_error() {
        let ws = sample(vec![1.0, 2.0], vec![f64::NEG_INFINITY; 2]);
        assert!(matches!(snis_estimate(&ws), Err(Error::ZeroWeights)));
        assert!(matches!(kong_ess(&ws), Err(Error::ZeroWeights)));
        assert!(WeightedSample::new(vec![1.0], 1, vec![f64::NAN]).is_err());
        assert!(WeightedSample::new(vec![1.0, 2.0], 1, vec![0.0]).is_err());
    }

    #[test]
    fn cdf_examples() {
        let ws = sample(vec![3.0, 1.0, 2.0, 5.0], vec![0.0; 4]);
        assert_eq!(weighted_cdf(&ws, 0, f64::INFINITY).unwrap(), 1.0);
        assert_eq!(weighted_cdf(&ws, 0, f64::NEG_INFINITY).unwrap(), 0.0);
        assert_eq!(weighted_cdf(&ws, 0, 2.0).unwrap(), 0.5);
        assert!(weighted_cdf(&ws, 1, 0.0).is_err());
    }

    #[test]
    fn quantile_examples() {
        let lw: Vec<f64> = [0.2f64, 0.3, 0.5].iter().map(|v| v.ln()).collect();
        let ws = sample(vec![1.0, 2.0, 3.0], lw);
        assert_eq!(weighted_quantile(&ws, 0, 0.4).unwrap(), 2.0);
        assert_eq!(weighted_quantile(&ws, 0, 0.6).unwrap(), 3.0);
        assert_eq!(weighted_quantile(&ws, 0, 0.0).unwrap(), 1.0);
        let med = sample(vec![9.0, 1.0, 4.0, 7.0, 3.0], vec![0.0; 5]);
        assert_eq!(weighted_quantile(&med, 0, 0.5).unwrap(), 4.0);
        assert!(weighted_quantile(&med, 0, 1.5).is_err());
    }

    #[test]
    fn kong_examples() {
        let eq = sample(vec![0.0; 10], vec![-2.0; 10]);
        assert!((kong_ess(&eq).unwrap() - 10.0).abs() < 1e-12);
        let mut lw = vec![f64::NEG_INFINITY; 10];
        lw[3] = 0.0;
        assert!((kong_ess(&sample(vec![0.0; 10], lw)).unwrap() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn snis_shift_invariant(vals in prop::collection::vec(-10.0f64..10.0, 1..40), shift in -50.0f64..50.0, seed in 0u64..100) {
            let n = vals.len();
            let lw: Vec<f64> = (0..n).map(|i| -(((i as u64 * 7 + seed) % 13) as f64) / 3.0).collect();
            let a = snis_estimate(&sample(vals.clone(), lw.clone())).unwrap()[0];
            let b = snis_estimate(&sample(vals, lw.iter().map(|w| w + shift).collect())).unwrap()[0];
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn quantile_monotone_and_consistent(vals in prop::collection::vec(-10.0f64..10.0, 1..40), a1 in 0.0f64..1.0, a2 in 0.0f64..1.0) {
            let n = vals.len();
            let lw: Vec<f64> = (0..n).map(|i| -((i % 5) as f64) / 2.0).collect();
            let ws = sample(vals, lw);
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let (q1, q2) = (weighted_quantile(&ws, 0, lo).unwrap(), weighted_quantile(&ws, 0, hi).unwrap());
            prop_assert!(q1 <= q2);
            prop_assert!(weighted_cdf(&ws, 0, q2).unwrap() >= hi - 1e-12);
        }

        #[test]
        fn kong_bounded(lw in prop::collection::vec(-20.0f64..0.0, 1..50)) {
            let n = lw.len();
            let ess = kong_ess(&sample(vec![0.0; n], lw)).unwrap();
            prop_assert!(ess > 0.0 && ess <= n as f64 * (1.0 + 1e-12));
        }
    }
}
