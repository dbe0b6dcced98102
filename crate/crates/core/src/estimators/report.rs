use serde::{Deserialize, Serialize};

use super::quantile_of_sorted;
use super::variance::{covariance_of_batch_means, default_batch_size};
use crate::error::{invalid, Error, Result};
use crate::samplers::{ChainTrace, TraceObserver};
use crate::scalar::Scalar;

/// Which statistic `xi(x)` is averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Functional {
    /// Every coordinate (posterior mean).
    #[default]
    Identity,
    /// A subset of coordinates.
    Components { indices: Vec<usize> },
    /// `1{x_i <= s}` for each `(component, threshold)` pair (marginal CDFs).
    Indicators { points: Vec<(usize, f64)> },
}

impl Functional {
    pub fn output_dim(&self, dim: usize) -> Result<usize> {
        let check = |i: usize| {
            if i < dim {
                Ok(())
            } else {
                Err(invalid(format!("component {i} out of range for dimension {dim}")))
            }
        };
        match self {
            Self::Identity => Ok(dim),
            Self::Components { indices } => {
                indices.iter().try_for_each(|i| check(*i))?;
                nonempty(indices.len())
            }
            Self::Indicators { points } => {
                points.iter().try_for_each(|(i, _)| check(*i))?;
                nonempty(points.len())
            }
        }
    }

    pub fn apply<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        match self {
            Self::Identity => out.copy_from_slice(x),
            Self::Components { indices } => {
                for (o, i) in out.iter_mut().zip(indices) {
                    *o = x[*i];
                }
            }
            Self::Indicators { points } => {
                for (o, (i, s)) in out.iter_mut().zip(points) {
                    *o = if x[*i] <= T::of(*s) { T::one() } else { T::zero() };
                }
            }
        }
    }
}

fn nonempty(p: usize) -> Result<usize> {
    if p == 0 {
        Err(invalid("functional selects no components"))
    } else {
        Ok(p)
    }
}

/// A requested quantile; `component: None` expands to every component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileRequest {
    #[serde(default)]
    pub component: Option<usize>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate<T> {
    pub component: usize,
    pub alpha: f64,
    pub value: T,
}

/// Components above which only the diagonal of the covariance is kept.
pub const MAX_FULL_COVARIANCE: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport<T> {
    pub n: usize,
    pub batch_size: usize,
    pub theta_hat: Vec<T>,
    /// Full plug-in covariance (row-major rows) when the functional has at
    /// most `MAX_FULL_COVARIANCE` components.
    pub xi_hat: Option<Vec<Vec<T>>>,
    pub xi_diag: Vec<T>,
    pub mcse: Vec<T>,
    pub kong_ess: T,
    /// Batch-means ESS of the unweighted chain, per component; `None` for
    /// components that never moved.
    pub mcmc_ess: Vec<Option<T>>,
    pub quantiles: Vec<QuantileEstimate<T>>,
}

impl<T: Scalar> EstimateReport<T> {
    pub fn from_trace(
        trace: &ChainTrace<T>,
        functional: &Functional,
        batch_size: Option<usize>,
        requests: &[QuantileRequest],
    ) -> Result<Self> {
        let mut est = StreamingEstimator::new(functional.clone(), batch_size, requests.to_vec());
        est.begin(trace.len(), trace.dim)?;
        for t in 0..trace.len() {
            est.record(trace.state(t), trace.log_weights[t], trace.accepts[t])?;
        }
        est.finish()
    }

    pub fn ne_ratio(&self) -> T {
        self.kong_ess / T::of(self.n as f64)
    }

    pub fn quantile(&self, component: usize, alpha: f64) -> Option<T> {
        self.quantiles
            .iter()
            .find(|q| q.component == component && q.alpha == alpha)
            .map(|q| q.value)
    }
}

/// One-pass estimator fed draw by draw, so long chains never need to be held
/// in memory. Weighted sums are kept relative to the running maximum
/// log-weight and rescaled when it grows.
#[derive(Debug, Clone)]
pub struct StreamingEstimator<T> {
    functional: Functional,
    requested_batch: Option<usize>,
    requests: Vec<QuantileRequest>,
    p: usize,
    batch: usize,
    reference: T,
    count: usize,
    buf: Vec<T>,
    sum_w: T,
    sum_w2: T,
    sum_xw: Vec<T>,
    batch_xw: Vec<T>,
    batch_w: Vec<T>,
    cur_xw: Vec<T>,
    cur_w: T,
    raw_mean: Vec<T>,
    raw_m2: Vec<T>,
    batch_raw: Vec<T>,
    cur_raw: Vec<T>,
    quantile_components: Vec<usize>,
    quantile_values: Vec<Vec<T>>,
    log_weights: Vec<T>,
}

impl<T: Scalar> StreamingEstimator<T> {
    pub fn new(functional: Functional, batch_size: Option<usize>, requests: Vec<QuantileRequest>) -> Self {
        Self {
            functional,
            requested_batch: batch_size,
            requests,
            p: 0,
            batch: 1,
            reference: T::neg_infinity(),
            count: 0,
            buf: Vec::new(),
            sum_w: T::zero(),
            sum_w2: T::zero(),
            sum_xw: Vec::new(),
            batch_xw: Vec::new(),
            batch_w: Vec::new(),
            cur_xw: Vec::new(),
            cur_w: T::zero(),
            raw_mean: Vec::new(),
            raw_m2: Vec::new(),
            batch_raw: Vec::new(),
            cur_raw: Vec::new(),
            quantile_components: Vec::new(),
            quantile_values: Vec::new(),
            log_weights: Vec::new(),
        }
    }

    fn rescale(&mut self, new_reference: T) {
        let f = (self.reference - new_reference).exp();
        self.sum_w *= f;
        self.sum_w2 *= f * f;
        self.cur_w *= f;
        for v in self.sum_xw.iter_mut().chain(&mut self.batch_xw).chain(&mut self.batch_w).chain(&mut self.cur_xw) {
            *v *= f;
        }
        self.reference = new_reference;
    }

    pub fn finish(self) -> Result<EstimateReport<T>> {
        if self.count == 0 {
            return Err(invalid("no draws recorded"));
        }
        if !(self.sum_w > T::zero()) {
            return Err(Error::ZeroWeights);
        }
        let p = self.p;
        let n = T::of(self.count as f64);
        let theta: Vec<T> = self.sum_xw.iter().map(|v| *v / self.sum_w).collect();
        let a = self.batch_w.len();
        if a < 2 {
            return Err(invalid(format!(
                "batch means needs at least 2 batches (n = {}, b = {})",
                self.count, self.batch
            )));
        }
        let b = T::of(self.batch as f64);
        let means: Vec<T> = (0..a)
            .flat_map(|k| {
                let (xw, w) = (&self.batch_xw[k * p..(k + 1) * p], self.batch_w[k]);
                xw.iter().zip(&theta).map(move |(v, th)| (*v - *th * w) / b).collect::<Vec<_>>()
            })
            .collect();
        let wbar = self.sum_w / n;
        let scale = (wbar * wbar).recip();
        let (xi_hat, xi_diag): (_, Vec<T>) = if p <= MAX_FULL_COVARIANCE {
            let cov = covariance_of_batch_means(&means, p, self.batch);
            let rows: Vec<Vec<T>> = cov.chunks(p).map(|r| r.iter().map(|v| *v * scale).collect()).collect();
            let diag = (0..p).map(|i| rows[i][i]).collect();
            (Some(rows), diag)
        } else {
            let diag = (0..p)
                .map(|i| {
                    let col: Vec<T> = means.iter().skip(i).step_by(p).copied().collect();
                    covariance_of_batch_means(&col, 1, self.batch)[0] * scale
                })
                .collect();
            (None, diag)
        };
        let mcse = xi_diag.iter().map(|v| (v.max(T::zero()) / n).sqrt()).collect();

        let mcmc_ess = (0..p)
            .map(|i| {
                let col: Vec<T> = self.batch_raw.iter().skip(i).step_by(p).copied().collect();
                let tau2 = covariance_of_batch_means(&col, 1, self.batch)[0];
                let s2 = self.raw_m2[i] / T::of((self.count.max(2) - 1) as f64);
                (tau2 > T::zero() && s2 > T::zero()).then(|| n * s2 / tau2)
            })
            .collect();

        let mut quantiles = Vec::new();
        for req in &self.requests {
            let comps: Vec<usize> = match req.component {
                Some(i) => vec![i],
                None => (0..p).collect(),
            };
            for c in comps {
                let slot = self.quantile_components.binary_search(&c).expect("component stored");
                let mut pairs: Vec<(T, T)> = self.quantile_values[slot]
                    .iter()
                    .zip(&self.log_weights)
                    .map(|(v, lw)| (*v, (*lw - self.reference).exp()))
                    .collect();
                pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("quantiles of NaN values"));
                quantiles.push(QuantileEstimate { component: c, alpha: req.alpha, value: quantile_of_sorted(&pairs, T::of(req.alpha)) });
            }
        }

        Ok(EstimateReport {
            n: self.count,
            batch_size: self.batch,
            theta_hat: theta,
            xi_hat,
            xi_diag,
            mcse,
            kong_ess: self.sum_w * self.sum_w / self.sum_w2,
            mcmc_ess,
            quantiles,
        })
    }
}

impl<T: Scalar> TraceObserver<T> for StreamingEstimator<T> {
    fn begin(&mut self, n: usize, dim: usize) -> Result<()> {
        let p = self.functional.output_dim(dim)?;
        let batch = self.requested_batch.unwrap_or_else(|| default_batch_size(n));
        if batch == 0 {
            return Err(invalid("batch size must be positive"));
        }
        let mut comps = Vec::new();
        for r in &self.requests {
            if !(0.0..=1.0).contains(&r.alpha) {
                return Err(invalid(format!("quantile level must lie in [0, 1], got {}", r.alpha)));
            }
            match r.component {
                Some(i) if i >= p => return Err(invalid(format!("quantile component {i} out of range for {p} components"))),
                Some(i) => comps.push(i),
                None => comps.extend(0..p),
            }
        }
        comps.sort_unstable();
        comps.dedup();
        *self = Self {
            p,
            batch,
            buf: vec![T::zero(); p],
            sum_xw: vec![T::zero(); p],
            cur_xw: vec![T::zero(); p],
            raw_mean: vec![T::zero(); p],
            raw_m2: vec![T::zero(); p],
            cur_raw: vec![T::zero(); p],
            quantile_values: vec![Vec::with_capacity(n); comps.len()],
            quantile_components: comps,
            ..Self::new(self.functional.clone(), self.requested_batch, std::mem::take(&mut self.requests))
        };
        Ok(())
    }

    fn record(&mut self, x: &[T], log_weight: T, _accepted: bool) -> Result<()> {
        if log_weight.is_nan() || log_weight == T::infinity() {
            return Err(invalid("log-weights must be finite or -inf"));
        }
        if log_weight > self.reference {
            self.rescale(log_weight);
        }
        let mut buf = std::mem::take(&mut self.buf);
        self.functional.apply(x, &mut buf);
        let w = (log_weight - self.reference).exp();
        self.count += 1;
        self.sum_w += w;
        self.sum_w2 += w * w;
        self.cur_w += w;
        let k = T::of(self.count as f64);
        for i in 0..self.p {
            let v = buf[i];
            self.sum_xw[i] += v * w;
            self.cur_xw[i] += v * w;
            self.cur_raw[i] += v;
            let delta = v - self.raw_mean[i];
            self.raw_mean[i] += delta / k;
            self.raw_m2[i] += delta * (v - self.raw_mean[i]);
        }
        if self.count % self.batch == 0 {
            let b = T::of(self.batch as f64);
            self.batch_xw.extend_from_slice(&self.cur_xw);
            self.batch_w.push(self.cur_w);
            self.batch_raw.extend(self.cur_raw.iter().map(|v| *v / b));
            self.cur_xw.iter_mut().chain(&mut self.cur_raw).for_each(|v| *v = T::zero());
            self.cur_w = T::zero();
        }
        for (slot, c) in self.quantile_components.iter().enumerate() {
            self.quantile_values[slot].push(buf[*c]);
        }
        if !self.quantile_components.is_empty() {
            self.log_weights.push(log_weight);
        }
        self.buf = buf;
        Ok(())
    }
}
