//! Choosing the smoothing level `lambda` and the kernel step size.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::envelope::{EnvelopeView, TargetModel};
use crate::error::{invalid, Result};
use crate::samplers::{initial_point, run_chain_with, Chain, SamplerConfig, TraceObserver, WarmStart};
use crate::scalar::Scalar;

/// RNG stream reserved for adaptation and pilot runs, so they never share
/// randomness with estimation replicates.
pub const TUNING_STREAM: u64 = u64::MAX;

fn lambda_star_residual<T: Scalar>(eigenvalues: &[T], lambda: T) -> T {
    let d = T::of(eigenvalues.len() as f64);
    eigenvalues
        .iter()
        .map(|s| (lambda * d - *s) / ((*s + lambda) * (*s + lambda + lambda)))
        .sum()
}

/// Variance-optimal `lambda` for a Gaussian target with covariance
/// eigenvalues `s_1..s_d`, found by bisection on `[s_min/d, s_max/d]`.
pub fn gaussian_lambda_star<T: Scalar>(eigenvalues: &[T]) -> Result<T> {
    if eigenvalues.is_empty() {
        return Err(invalid("need at least one eigenvalue"));
    }
    if eigenvalues.iter().any(|s| !(*s > T::zero() && s.is_finite())) {
        return Err(invalid("eigenvalues must be positive and finite"));
    }
    let d = T::of(eigenvalues.len() as f64);
    let lo = eigenvalues.iter().copied().fold(T::infinity(), T::min);
    let hi = eigenvalues.iter().copied().fold(T::zero(), T::max);
    if lo == hi {
        return Ok(lo / d);
    }
    let (mut a, mut b) = (lo / d, hi / d);
    loop {
        let mid = a + (b - a) / T::of(2.0);
        if mid <= a || mid >= b {
            break;
        }
        if lambda_star_residual(eigenvalues, mid) < T::zero() {
            a = mid;
        } else {
            b = mid;
        }
    }
    let (ra, rb) = (lambda_star_residual(eigenvalues, a), lambda_star_residual(eigenvalues, b));
    Ok(if ra.abs() <= rb.abs() { a } else { b })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSettings {
    /// Target acceptance rate; `None` uses the kernel default.
    pub target: Option<f64>,
    pub tolerance: f64,
    pub batch: usize,
    pub max_batches: usize,
    /// `my_mala` steps are capped at `2 lambda * cap_factor`.
    pub cap_factor: f64,
    /// Length of the frozen-step run that confirms convergence.
    pub confirm: usize,
}

impl Default for StepSettings {
    fn default() -> Self {
        Self { target: None, tolerance: 0.07, batch: 200, max_batches: 100, cap_factor: 2.0, confirm: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTuning<T> {
    pub step: T,
    pub acc_rate: f64,
    pub target: f64,
    pub batches: usize,
    pub converged: bool,
    /// Last state of the adaptation chain, a burned-in starting point for
    /// later chains.
    #[serde(skip)]
    pub state: Vec<T>,
}

/// Robbins-Monro adaptation of the step size towards a target acceptance
/// rate on a dedicated chain. The returned step is fixed afterwards, so
/// estimation chains are time-homogeneous.
pub fn tune_step<T, M>(model: &M, lambda: T, config: &SamplerConfig<T>, settings: &StepSettings) -> Result<StepTuning<T>>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
{
    config.validate()?;
    let target = settings.target.unwrap_or_else(|| config.kind.default_target_acceptance());
    if !(target > 0.0 && target < 1.0) {
        return Err(invalid(format!("target acceptance must lie in (0, 1), got {target}")));
    }
    if settings.batch == 0 || settings.max_batches == 0 {
        return Err(invalid("step tuning needs positive batch size and batch count"));
    }
    let cap = match config.kind {
        crate::samplers::SamplerKind::MyMala => T::of(2.0 * settings.cap_factor) * lambda,
        _ => T::infinity(),
    };
    let view = EnvelopeView::new(model, lambda)?;
    let start = initial_point(model, lambda, &config.warm_start)?;
    let h0 = config.resolved_step(lambda).min(cap);
    let mut chain = Chain::new(view, config.kind, h0, config.leapfrog, start)?;
    let mut rng = SamplerConfig { stream: TUNING_STREAM, ..config.clone() }.rng();

    let mut run = |chain: &mut Chain<'_, T, M>, h: T, iters: usize| -> Result<f64> {
        chain.set_step_size(h);
        let mut acc = 0usize;
        for _ in 0..iters {
            acc += usize::from(chain.advance(&mut rng)?);
        }
        Ok(acc as f64 / iters as f64)
    };

    let log_cap = cap.ln();
    let mut log_h = h0.ln();
    let mut recent: Vec<f64> = Vec::new();
    let mut best = (f64::INFINITY, h0, 0.0);
    for t in 1..=settings.max_batches {
        let h = log_h.exp();
        let acc = run(&mut chain, h, settings.batch)?;
        if (acc - target).abs() < best.0 {
            best = ((acc - target).abs(), h, acc);
        }
        recent.push(acc);
        log_h = (log_h + T::of((t as f64).powf(-0.6) * (acc - target))).min(log_cap);
        if recent.len() < 5 {
            continue;
        }
        let avg = recent[recent.len() - 5..].iter().sum::<f64>() / 5.0;
        let pinned = log_h >= log_cap && avg > target;
        if (avg - target).abs() <= settings.tolerance / 2.0 || pinned {
            let h = log_h.exp();
            let confirmed = run(&mut chain, h, settings.confirm.max(1))?;
            let converged = (confirmed - target).abs() <= settings.tolerance;
            if converged || pinned {
                if !converged {
                    warn!("{} step pinned at cap {h}, acceptance {confirmed:.3}", config.kind);
                }
                let state = chain.state().x.clone();
                return Ok(StepTuning { step: h, acc_rate: confirmed, target, batches: t, converged, state });
            }
        }
    }
    warn!(
        "{} step adaptation did not settle within {} batches; best acceptance {:.3}",
        config.kind, settings.max_batches, best.2
    );
    Ok(StepTuning {
        step: best.1,
        acc_rate: best.2,
        target,
        batches: settings.max_batches,
        converged: false,
        state: chain.state().x.clone(),
    })
}

/// Streaming `n_e / n` of the log-weights passed to it.
#[derive(Debug, Clone)]
struct KongAccumulator<T> {
    reference: T,
    count: usize,
    sum: T,
    sum_sq: T,
}

impl<T: Scalar> KongAccumulator<T> {
    fn new() -> Self {
        Self { reference: T::neg_infinity(), count: 0, sum: T::zero(), sum_sq: T::zero() }
    }

    fn ratio(&self) -> Option<f64> {
        (self.sum > T::zero()).then(|| (self.sum * self.sum / self.sum_sq).as_f64() / self.count as f64)
    }
}

impl<T: Scalar> TraceObserver<T> for KongAccumulator<T> {
    fn begin(&mut self, _n: usize, _dim: usize) -> Result<()> {
        *self = Self::new();
        Ok(())
    }

    fn record(&mut self, _x: &[T], log_weight: T, _accepted: bool) -> Result<()> {
        if log_weight > self.reference {
            let f = (self.reference - log_weight).exp();
            self.sum *= f;
            self.sum_sq *= f * f;
            self.reference = log_weight;
        }
        let w = (log_weight - self.reference).exp();
        self.count += 1;
        self.sum += w;
        self.sum_sq += w * w;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LambdaSettings {
    /// Starting smoothing level; `None` uses `1/d`.
    pub lambda0: Option<f64>,
    pub pilot_n: usize,
    pub window: (f64, f64),
    pub max_probes: usize,
    /// Re-tune the step at every probe (otherwise the kernel default for
    /// that `lambda` is used).
    pub adapt_step: bool,
    pub step: StepSettings,
}

impl Default for LambdaSettings {
    fn default() -> Self {
        Self {
            lambda0: None,
            pilot_n: 10_000,
            window: (0.4, 0.8),
            max_probes: 20,
            adapt_step: true,
            step: StepSettings::default(),
        }
    }
}

impl LambdaSettings {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.window;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(invalid(format!("window must satisfy 0 < lo < hi < 1, got ({lo}, {hi})")));
        }
        if self.pilot_n == 0 || self.max_probes == 0 {
            return Err(invalid("pilot length and probe budget must be positive"));
        }
        if let Some(l) = self.lambda0 {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid(format!("lambda0 must be positive, got {l}")));
            }
        }
        Ok(())
    }

    fn midpoint(&self) -> f64 {
        (self.window.0 + self.window.1) / 2.0
    }
}

/// One pilot evaluation at a fixed `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe<T> {
    pub lambda: T,
    pub ne_ratio: f64,
    pub step: T,
    pub acc_rate: f64,
    pub step_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult<T> {
    pub lambda: T,
    pub ne_ratio: f64,
    pub step: T,
    pub acc_rate: f64,
    pub pilot_n: usize,
    /// False when the probe budget ran out before `n_e/n` entered the
    /// window; the closest probe is returned.
    pub in_window: bool,
    pub step_converged: bool,
    pub probes: Vec<Probe<T>>,
}

impl<T: Scalar> TuneResult<T> {
    fn from_probe(probe: Probe<T>, pilot_n: usize, in_window: bool, probes: Vec<Probe<T>>) -> Self {
        Self {
            lambda: probe.lambda,
            ne_ratio: probe.ne_ratio,
            step: probe.step,
            acc_rate: probe.acc_rate,
            pilot_n,
            in_window,
            step_converged: probe.step_converged,
            probes,
        }
    }
}

/// Tunes the step at `lambda` (if requested) and measures `n_e/n` on a pilot
/// chain of `settings.pilot_n` draws.
pub fn probe_lambda<T, M>(model: &M, config: &SamplerConfig<T>, lambda: T, settings: &LambdaSettings) -> Result<Probe<T>>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
{
    if !config.kind.targets_envelope() {
        return Err(invalid(format!("{} targets pi directly and carries no importance weights", config.kind)));
    }
    let mut pilot = SamplerConfig { n: settings.pilot_n, stream: TUNING_STREAM, ..config.clone() };
    let step_converged = if settings.adapt_step {
        let tuned = tune_step(model, lambda, config, &settings.step)?;
        pilot.step = Some(tuned.step);
        pilot.warm_start = WarmStart::Point(tuned.state);
        tuned.converged
    } else {
        true
    };
    let step = pilot.resolved_step(lambda);
    let mut kong = KongAccumulator::new();
    let summary = run_chain_with(&pilot, model, lambda, &mut kong)?;
    let ne_ratio = kong.ratio().ok_or(crate::error::Error::ZeroWeights)?;
    debug!("probe lambda={lambda} step={step} acc={:.3} ne/n={ne_ratio:.3}", summary.acc_rate);
    Ok(Probe { lambda, ne_ratio, step, acc_rate: summary.acc_rate, step_converged })
}

/// Searches for `lambda` with `n_e/n` inside `settings.window`: doubling or
/// halving until the window is bracketed, then bisection on `log lambda`.
pub fn tune_lambda<T, M>(model: &M, config: &SamplerConfig<T>, settings: &LambdaSettings) -> Result<TuneResult<T>>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
{
    settings.validate()?;
    let (lo, hi) = settings.window;
    let lambda0 = T::of(settings.lambda0.unwrap_or(1.0 / model.dim().max(1) as f64));
    let mut probes: Vec<Probe<T>> = Vec::new();
    let evaluate = |lambda: T, probes: &mut Vec<Probe<T>>| -> Result<Probe<T>> {
        let p = probe_lambda(model, config, lambda, settings)?;
        if let Some(prev) = probes.iter().filter(|q| q.lambda < lambda).max_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap()) {
            if p.ne_ratio > prev.ne_ratio {
                warn!("n_e/n increased from {:.3} to {:.3} between lambda {} and {lambda}", prev.ne_ratio, p.ne_ratio, prev.lambda);
            }
        }
        probes.push(p);
        Ok(p)
    };
    let inside = |r: f64| lo <= r && r <= hi;

    // (small lambda with n_e/n above the window, large lambda below it)
    let mut bracket: (Option<T>, Option<T>) = (None, None);
    let mut lambda = lambda0;
    while probes.len() < settings.max_probes {
        let p = evaluate(lambda, &mut probes)?;
        if inside(p.ne_ratio) {
            return Ok(TuneResult::from_probe(p, settings.pilot_n, true, probes));
        }
        if p.ne_ratio > hi {
            bracket.0 = Some(lambda);
        } else {
            bracket.1 = Some(lambda);
        }
        lambda = match bracket {
            (Some(a), Some(b)) => (a * b).sqrt(),
            (Some(a), None) => a * T::of(2.0),
            (None, Some(b)) => b / T::of(2.0),
            (None, None) => unreachable!(),
        };
    }
    let mid = settings.midpoint();
    let best = *probes
        .iter()
        .min_by(|a, b| (a.ne_ratio - mid).abs().partial_cmp(&(b.ne_ratio - mid).abs()).unwrap())
        .expect("at least one probe");
    warn!("no probe reached the window after {} probes; closest n_e/n = {:.3}", probes.len(), best.ne_ratio);
    Ok(TuneResult::from_probe(best, settings.pilot_n, false, probes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{GaussianModel, Penalty, SeparableModel};
    use crate::samplers::SamplerKind;
    use proptest::prelude::*;

    #[test]
    fn lambda_star_special_cases() {
        assert_eq!(gaussian_lambda_star(&[2.0f64; 4]).unwrap(), 0.5);
        assert_eq!(gaussian_lambda_star(&[1.0f64]).unwrap(), 1.0);
        assert!(gaussian_lambda_star::<f64>(&[]).is_err());
        assert!(gaussian_lambda_star(&[1.0f64, 0.0]).is_err());
    }

    #[test]
    fn lambda_star_two_eigenvalues_against_grid() {
        let eig = [1.0f64, 4.0];
        let f = |l: f64| (2.0 * l - 1.0) / ((1.0 + l) * (1.0 + 2.0 * l)) + (2.0 * l - 4.0) / ((4.0 + l) * (4.0 + 2.0 * l));
        // Fine grid to locate the sign change, then refine within that cell.
        let n = 1_000_000;
        let grid: Vec<f64> = (0..=n).map(|i| 0.5 + 1.5 * i as f64 / n as f64).collect();
        let k = grid.windows(2).position(|w| f(w[0]) < 0.0 && f(w[1]) >= 0.0).unwrap();
        let (mut a, mut b) = (grid[k], grid[k + 1]);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if f(m) < 0.0 {
                a = m
            } else {
                b = m
            }
        }
        let got = gaussian_lambda_star(&eig).unwrap();
        assert!((got - 0.5 * (a + b)).abs() < 1e-10, "{got} vs {a}");
        assert!(f(got).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn lambda_star_in_bracket(eig in prop::collection::vec(0.01f64..100.0, 1..12)) {
            let l = gaussian_lambda_star(&eig).unwrap();
            let d = eig.len() as f64;
            let lo = eig.iter().copied().fold(f64::INFINITY, f64::min) / d;
            let hi = eig.iter().copied().fold(0.0, f64::max) / d;
            prop_assert!(lo <= l && l <= hi);
            prop_assert!(lambda_star_residual(&eig, l).abs() < 1e-12);
        }
    }

    #[test]
    fn step_tuning_hits_targets_on_laplace() {
        let model = SeparableModel::<f64>::new(20, Penalty::Abs).unwrap();
        let lambda = 0.05;
        for kind in [SamplerKind::MyMala, SamplerKind::MyHmc, SamplerKind::MyBarker] {
            let cfg = SamplerConfig::new(kind, 0).with_seed(7);
            let t = tune_step(&model, lambda, &cfg, &StepSettings::default()).unwrap();
            if kind == SamplerKind::MyMala {
                assert!(t.step <= 4.0 * lambda + 1e-15);
            }
            if t.converged {
                assert!((t.acc_rate - t.target).abs() <= 0.07, "{kind}: {t:?}");
            }
            assert!(t.converged || kind == SamplerKind::MyMala, "{kind}: {t:?}");
        }
    }

    #[test]
    fn huge_initial_step_shrinks() {
        let model = GaussianModel::isotropic(1, 1.0f64).unwrap();
        for seed in 0..20 {
            let cfg = SamplerConfig::new(SamplerKind::MyHmc, 0).with_seed(seed).with_step(1e3);
            let t = tune_step(&model, 1.0, &cfg, &StepSettings::default()).unwrap();
            assert!(t.step < 1e3 && t.acc_rate > 0.3, "seed {seed}: {t:?}");
        }
    }

    #[test]
    fn tiny_lambda_has_unit_ess() {
        let model = SeparableModel::<f64>::new(1, Penalty::Abs).unwrap();
        let cfg = SamplerConfig::new(SamplerKind::MyMala, 0).with_seed(3);
        let settings = LambdaSettings { pilot_n: 5000, ..Default::default() };
        let p = probe_lambda(&model, &cfg, 1e-8, &settings).unwrap();
        assert!(p.ne_ratio > 0.99, "{p:?}");
    }

    #[test]
    fn lambda_search_lands_in_window() {
        let model = GaussianModel::isotropic(4, 1.0f64).unwrap();
        let cfg = SamplerConfig::new(SamplerKind::MyMala, 0).with_seed(11);
        let settings = LambdaSettings { pilot_n: 5000, window: (0.9, 0.95), lambda0: Some(0.01), ..Default::default() };
        let r = tune_lambda(&model, &cfg, &settings).unwrap();
        assert!(r.in_window, "{r:?}");
        assert!(r.probes.len() > 1);
        assert_eq!(r.probes.last().unwrap().lambda, r.lambda);
        // iid value of n_e/n at the optimal lambda = s/d is about 0.92.
        assert!(r.lambda > 0.25 * 0.5 && r.lambda < 0.25 * 2.0, "{r:?}");
    }

    #[test]
    fn exhausted_search_returns_closest_probe() {
        let model = SeparableModel::<f64>::new(2, Penalty::Abs).unwrap();
        let cfg = SamplerConfig::new(SamplerKind::MyMala, 0).with_seed(5);
        let settings = LambdaSettings { pilot_n: 2000, max_probes: 2, lambda0: Some(1e-6), adapt_step: false, ..Default::default() };
        let r = tune_lambda(&model, &cfg, &settings).unwrap();
        assert!(!r.in_window);
        assert_eq!(r.probes.len(), 2);
        assert!(r.probes.iter().any(|p| p.lambda == r.lambda));
    }

    #[test]
    fn rejects_pi_kernels_and_bad_windows() {
        let model = SeparableModel::<f64>::new(1, Penalty::Abs).unwrap();
        let cfg = SamplerConfig::new(SamplerKind::PMala, 0);
        assert!(probe_lambda(&model, &cfg, 0.1, &LambdaSettings::default()).is_err());
        let cfg = SamplerConfig::new(SamplerKind::MyMala, 0);
        let bad = LambdaSettings { window: (0.8, 0.4), ..Default::default() };
        assert!(tune_lambda(&model, &cfg, &bad).is_err());
    }
}
