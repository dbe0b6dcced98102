//! The four experiment posteriors, with their synthetic data generators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::prox::{
    AdmmSettings, NuclearModel, NuclearSpec, Penalty, PoissonModel, PoissonSpec, SeparableModel,
    TrendfilterModel, TrendfilterSpec,
};
use crate::scalar::Scalar;

/// Product density `prod_i exp(-|x_i|^beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub beta: u32,
    pub d: usize,
}

pub fn make_toy<T: Scalar>(spec: ToySpec) -> Result<SeparableModel<T>> {
    let penalty = match spec.beta {
        1 => Penalty::Abs,
        4 => Penalty::Power4,
        b => return Err(invalid(format!("toy exponent must be 1 or 4, got {b}"))),
    };
    SeparableModel::new(spec.d, penalty)
}

/// Noisy piecewise-linear signal observed on an even grid over `[1, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendSignal {
    pub m: usize,
    pub sigma2: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TrendSignal {
    fn default() -> Self {
        Self { m: 100, sigma2: 9.0, alpha: DEFAULT_TREND_ALPHA, seed: 20_170_101 }
    }
}

/// Penalty weight used when none is configured.
pub const DEFAULT_TREND_ALPHA: f64 = 5.0;

impl TrendSignal {
    pub fn grid(&self) -> Vec<f64> {
        if self.m == 1 {
            return vec![1.0];
        }
        let step = 99.0 / (self.m - 1) as f64;
        (0..self.m).map(|i| 1.0 + step * i as f64).collect()
    }

    pub fn mean_at(t: f64) -> f64 {
        if t <= 35.0 {
            t
        } else if t <= 70.0 {
            70.0 - t
        } else {
            0.5 * t - 35.0
        }
    }

    pub fn observations(&self) -> Result<Vec<f64>> {
        let noise = Normal::new(0.0, self.sigma2.sqrt()).map_err(|e| invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(self.grid().into_iter().map(|t| Self::mean_at(t) + noise.sample(&mut rng)).collect())
    }
}

/// Trend-filtering posterior for simulated data; `k = 1` penalizes second
/// differences (piecewise-linear fits).
pub fn make_trendfilter<T: Scalar>(signal: &TrendSignal, k: usize) -> Result<(TrendfilterModel<T>, Vec<T>)> {
    let y: Vec<T> = signal.observations()?.into_iter().map(T::of).collect();
    let model = trendfilter_from_data(y.clone(), signal.sigma2, signal.alpha, k)?;
    Ok((model, y))
}

pub fn trendfilter_from_data<T: Scalar>(y: Vec<T>, sigma2: f64, alpha: f64, k: usize) -> Result<TrendfilterModel<T>> {
    let spec = TrendfilterSpec { m: y.len(), k, alpha: T::of(alpha), sigma2: T::of(sigma2), y };
    TrendfilterModel::new(spec, AdmmSettings::default())
}

/// Noisy two-tone checkerboard image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckerboardSpec {
    pub size: usize,
    pub block: usize,
    pub sigma2: f64,
    /// Defaults to `1.15 / sigma2` when absent.
    pub alpha: Option<f64>,
    pub seed: u64,
}

impl Default for CheckerboardSpec {
    fn default() -> Self {
        Self { size: 64, block: 8, sigma2: 0.01, alpha: None, seed: 20_170_103 }
    }
}

impl CheckerboardSpec {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(1.15 / self.sigma2)
    }

    /// Row-major clean image. Lit blocks have intensity 1 in the left half
    /// and 0.7 in the right half; the rest are 0. Every column is a multiple
    /// of one of two block indicators, so the image has rank 2.
    pub fn clean_image(&self) -> Vec<f64> {
        let n = self.size;
        let mut x = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if (i / self.block + j / self.block) % 2 == 0 {
                    x[i * n + j] = if j < n / 2 { 1.0 } else { 0.7 };
                }
            }
        }
        x
    }
}

pub fn make_checkerboard<T: Scalar>(spec: &CheckerboardSpec) -> Result<(NuclearModel<T>, Vec<T>)> {
    if spec.size == 0 || spec.block == 0 {
        return Err(invalid("checkerboard size and block must be positive"));
    }
    let noise = Normal::new(0.0, spec.sigma2.sqrt()).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let y: Vec<T> = spec.clean_image().into_iter().map(|v| T::of(v + noise.sample(&mut rng))).collect();
    let model = NuclearModel::new(NuclearSpec {
        rows: spec.size,
        cols: spec.size,
        alpha: T::of(spec.alpha()),
        sigma2: T::of(spec.sigma2),
        y: y.clone(),
    })?;
    Ok((model, y))
}

/// Synthetic data for the hierarchical Poisson model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonDataSpec {
    pub classes: usize,
    pub sigma_eta: f64,
    pub c: f64,
    pub per_class: usize,
    /// Grand mean used to draw the class effects.
    pub mu_star: f64,
    pub seed: u64,
}

impl Default for PoissonDataSpec {
    fn default() -> Self {
        Self { classes: 50, sigma_eta: 3.0, c: 10.0, per_class: 5, mu_star: 0.0, seed: 42 }
    }
}

impl PoissonDataSpec {
    /// Class effects and counts, deterministic per seed.
    pub fn generate(&self) -> Result<(Vec<f64>, Vec<Vec<u64>>)> {
        if self.classes == 0 {
            return Err(invalid("need at least one class"));
        }
        let effect = Normal::new(self.mu_star, self.sigma_eta).map_err(|e| invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let eta: Vec<f64> = (0..self.classes).map(|_| effect.sample(&mut rng)).collect();
        let mut counts = Vec::with_capacity(self.classes);
        for e in &eta {
            let rate = Poisson::new(e.exp()).map_err(|err| invalid(err.to_string()))?;
            counts.push((0..self.per_class).map(|_| rate.sample(&mut rng) as u64).collect());
        }
        Ok((eta, counts))
    }
}

pub fn make_poisson<T: Scalar>(spec: &PoissonDataSpec) -> Result<(PoissonModel<T>, Vec<Vec<u64>>)> {
    let (_, counts) = spec.generate()?;
    let model = PoissonModel::new(PoissonSpec::new(
        counts.clone(),
        T::of(spec.sigma_eta * spec.sigma_eta),
        T::of(spec.c * spec.c),
    ))?;
    Ok((model, counts))
}
