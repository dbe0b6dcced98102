use super::{snis_estimate, WeightedSample};
use crate::error::{check_dim, invalid, Error, Result};
use crate::scalar::Scalar;

/// `floor(sqrt(n))`, at least 1.
pub fn default_batch_size(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(1)
}

/// Batch-means estimate of the asymptotic covariance of a `q`-variate
/// series stored row-major `n x q`. Trailing draws that do not fill a batch
/// are dropped. Returns a row-major `q x q` matrix.
pub fn batch_means_cov<T: Scalar>(series: &[T], q: usize, batch_size: usize) -> Result<Vec<T>> {
    if q == 0 || batch_size == 0 {
        return Err(invalid("series dimension and batch size must be positive"));
    }
    if series.len() % q != 0 {
        return Err(invalid("series length is not a multiple of its dimension"));
    }
    let n = series.len() / q;
    let a = n / batch_size;
    if a < 2 {
        return Err(invalid(format!("batch means needs at least 2 batches (n = {n}, b = {batch_size})")));
    }
    let b = T::of(batch_size as f64);
    let mut means = vec![T::zero(); a * q];
    for k in 0..a {
        let m = &mut means[k * q..(k + 1) * q];
        for t in k * batch_size..(k + 1) * batch_size {
            for (acc, v) in m.iter_mut().zip(&series[t * q..(t + 1) * q]) {
                *acc += *v;
            }
        }
        m.iter_mut().for_each(|v| *v /= b);
    }
    Ok(covariance_of_batch_means(&means, q, batch_size))
}

/// `(b / (a - 1)) sum_k (m_k - mbar)(m_k - mbar)'` from row-major batch means.
pub(crate) fn covariance_of_batch_means<T: Scalar>(means: &[T], q: usize, batch_size: usize) -> Vec<T> {
    let a = means.len() / q;
    let mut grand = vec![T::zero(); q];
    for k in 0..a {
        for (g, v) in grand.iter_mut().zip(&means[k * q..(k + 1) * q]) {
            *g += *v;
        }
    }
    grand.iter_mut().for_each(|g| *g /= T::of(a as f64));
    let mut cov = vec![T::zero(); q * q];
    let mut dev = vec![T::zero(); q];
    for k in 0..a {
        for j in 0..q {
            dev[j] = means[k * q + j] - grand[j];
        }
        for i in 0..q {
            for j in 0..=i {
                cov[i * q + j] += dev[i] * dev[j];
            }
        }
    }
    let scale = T::of(batch_size as f64) / T::of((a - 1) as f64);
    for i in 0..q {
        for j in 0..=i {
            let v = cov[i * q + j] * scale;
            cov[i * q + j] = v;
            cov[j * q + i] = v;
        }
    }
    cov
}

/// Plug-in estimate of the asymptotic covariance of the self-normalized
/// estimator: `(1 / wbar^2) [I, -theta] Sigma [I, -theta]'`, with `Sigma`
/// the batch-means covariance of `(xi w, w)`.
pub fn plugin_xi<T: Scalar>(ws: &WeightedSample<T>, batch_size: usize) -> Result<Vec<T>> {
    let p = ws.dim();
    let w = ws.scaled_weights()?;
    let theta = snis_estimate(ws)?;
    let q = p + 1;
    let mut stacked = Vec::with_capacity(ws.len() * q);
    for (t, wt) in w.iter().enumerate() {
        stacked.extend(ws.row(t).iter().map(|v| *v * *wt));
        stacked.push(*wt);
    }
    let sigma = batch_means_cov(&stacked, q, batch_size)?;
    let wbar = w.iter().copied().sum::<T>() / T::of(w.len() as f64);
    // A = [I, -theta]; (A Sigma A')_{ij}
    let mut xi = vec![T::zero(); p * p];
    for i in 0..p {
        for j in 0..=i {
            let v = sigma[i * q + j] - theta[j] * sigma[i * q + p] - theta[i] * sigma[p * q + j]
                + theta[i] * theta[j] * sigma[p * q + p];
            let v = v / (wbar * wbar);
            xi[i * p + j] = v;
            xi[j * p + i] = v;
        }
    }
    Ok(xi)
}

/// Sample autocorrelations for lags `0..=max_lag` with the biased (`1/n`)
/// normalization.
pub fn acf<T: Scalar>(series: &[T], max_lag: usize) -> Result<Vec<T>> {
    let n = series.len();
    if n <= max_lag {
        return Err(invalid(format!("need more than {max_lag} draws, got {n}")));
    }
    let mean = series.iter().copied().sum::<T>() / T::of(n as f64);
    let dev: Vec<T> = series.iter().map(|v| *v - mean).collect();
    let c0: T = dev.iter().map(|d| *d * *d).sum();
    if !(c0 > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    Ok((0..=max_lag)
        .map(|k| dev.iter().zip(&dev[k..]).map(|(a, b)| *a * *b).sum::<T>() / c0)
        .collect())
}

/// Batch-means effective sample size `n s^2 / tau^2`.
pub fn mcmc_ess<T: Scalar>(series: &[T], batch_size: usize) -> Result<T> {
    let n = series.len();
    if n < 2 {
        return Err(invalid("need at least two draws"));
    }
    let mean = series.iter().copied().sum::<T>() / T::of(n as f64);
    let s2 = series.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / T::of((n - 1) as f64);
    if !(s2 > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    let tau2 = batch_means_cov(series, 1, batch_size)?[0];
    if !(tau2 > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    Ok(T::of(n as f64) * s2 / tau2)
}

/// Mean of the componentwise ratios `tau2_method2 / tau2_method1`; above 1
/// when method 1 is more efficient.
pub fn relative_efficiency<T: Scalar>(tau2_method1: &[T], tau2_method2: &[T]) -> Result<T> {
    check_dim(tau2_method1.len(), tau2_method2.len())?;
    if tau2_method1.is_empty() {
        return Err(invalid("need at least one component"));
    }
    if tau2_method1.iter().chain(tau2_method2).any(|v| !(*v > T::zero())) {
        return Err(invalid("asymptotic variances must be strictly positive"));
    }
    let sum: T = tau2_method1.iter().zip(tau2_method2).map(|(a, b)| *b / *a).sum();
    Ok(sum / T::of(tau2_method1.len() as f64))
}
