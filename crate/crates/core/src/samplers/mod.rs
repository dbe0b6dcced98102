//! MCMC kernels on the envelope and the chain runner.

mod kernels;

pub use kernels::{
    barker_keep_probability, leapfrog, my_barker_step, my_hmc_step, my_mala_step, p_hmc_step, p_mala_step,
    ChainState,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envelope::{EnvelopeView, TargetModel};
use crate::error::{check_dim, invalid, Error, Result};
use crate::scalar::{dist_sq, norm_sq, Scalar};
use kernels::{hmc_step, mala_step, Invariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    MyMala,
    MyHmc,
    MyBarker,
    PMala,
    PHmc,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 5] =
        [SamplerKind::MyMala, SamplerKind::MyHmc, SamplerKind::MyBarker, SamplerKind::PMala, SamplerKind::PHmc];

    /// True for kernels whose invariant density is the envelope, so draws
    /// need importance weights.
    pub fn targets_envelope(self) -> bool {
        matches!(self, Self::MyMala | Self::MyHmc | Self::MyBarker)
    }

    pub fn is_hmc(self) -> bool {
        matches!(self, Self::MyHmc | Self::PHmc)
    }

    pub fn default_target_acceptance(self) -> f64 {
        if self.is_hmc() {
            0.65
        } else {
            0.574
        }
    }

    /// Step used when none is configured: `h = 2 lambda` for the Langevin
    /// kernels, `h = lambda` for Barker and `eps = sqrt(lambda)` for HMC.
    pub fn default_step<T: Scalar>(self, lambda: T) -> T {
        match self {
            Self::MyMala | Self::PMala => T::of(2.0) * lambda,
            Self::MyBarker => lambda,
            Self::MyHmc | Self::PHmc => lambda.sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::MyMala => "my_mala",
            Self::MyHmc => "my_hmc",
            Self::MyBarker => "my_barker",
            Self::PMala => "p_mala",
            Self::PHmc => "p_hmc",
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown sampler kind '{s}'")))
    }
}

/// Number of leapfrog steps per HMC iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeapfrogPolicy {
    Fixed(usize),
    /// Uniform on `{1, ..., max}` each iteration.
    Uniform { max: usize },
}

impl Default for LeapfrogPolicy {
    fn default() -> Self {
        Self::Fixed(10)
    }
}

impl LeapfrogPolicy {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> usize {
        match self {
            Self::Fixed(l) => l,
            Self::Uniform { max } => rng.random_range(1..=max),
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Self::Fixed(0) | Self::Uniform { max: 0 } => Err(invalid("leapfrog count must be at least 1")),
            _ => Ok(()),
        }
    }
}

/// Initial point of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart<T> {
    /// Approximate mode from proximal-point iterations started at the origin.
    Mode { iterations: usize },
    Origin,
    Point(Vec<T>),
}

impl<T> Default for WarmStart<T> {
    fn default() -> Self {
        Self::Mode { iterations: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig<T> {
    pub kind: SamplerKind,
    /// `h` for Langevin and Barker kernels, `eps` for HMC. Defaults per kind.
    #[serde(default)]
    pub step: Option<T>,
    #[serde(default)]
    pub leapfrog: LeapfrogPolicy,
    #[serde(default)]
    pub seed: u64,
    /// RNG stream, one per replicate.
    #[serde(default)]
    pub stream: u64,
    pub n: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default)]
    pub warm_start: WarmStart<T>,
}

fn default_warmup() -> usize {
    1000
}

impl<T: Scalar> SamplerConfig<T> {
    pub fn new(kind: SamplerKind, n: usize) -> Self {
        Self {
            kind,
            step: None,
            leapfrog: LeapfrogPolicy::default(),
            seed: 0,
            stream: 0,
            n,
            warmup: default_warmup(),
            warm_start: WarmStart::default(),
        }
    }

    pub fn with_step(mut self, step: T) -> Self {
        self.step = Some(step);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_warmup(mut self, warmup: usize) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_leapfrog(mut self, leapfrog: LeapfrogPolicy) -> Self {
        self.leapfrog = leapfrog;
        self
    }

    pub fn with_warm_start(mut self, warm_start: WarmStart<T>) -> Self {
        self.warm_start = warm_start;
        self
    }

    /// Same configuration on the RNG stream of replicate `id`.
    pub fn for_replicate(&self, id: u64) -> Self {
        Self { stream: id, ..self.clone() }
    }

    pub fn resolved_step(&self, lambda: T) -> T {
        self.step.unwrap_or_else(|| self.kind.default_step(lambda))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(h) = self.step {
            if !(h > T::zero() && h.is_finite()) {
                return Err(invalid(format!("step size must be positive, got {h}")));
            }
        }
        self.leapfrog.validate()
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Receives every post-warmup draw of a chain.
pub trait TraceObserver<T> {
    fn begin(&mut self, _n: usize, _dim: usize) -> Result<()> {
        Ok(())
    }

    fn record(&mut self, x: &[T], log_weight: T, accepted: bool) -> Result<()>;
}

impl<T: Copy, A: TraceObserver<T>, B: TraceObserver<T>> TraceObserver<T> for (A, B) {
    fn begin(&mut self, n: usize, dim: usize) -> Result<()> {
        self.0.begin(n, dim)?;
        self.1.begin(n, dim)
    }

    fn record(&mut self, x: &[T], log_weight: T, accepted: bool) -> Result<()> {
        self.0.record(x, log_weight, accepted)?;
        self.1.record(x, log_weight, accepted)
    }
}

impl<T, O: TraceObserver<T> + ?Sized> TraceObserver<T> for &mut O {
    fn begin(&mut self, n: usize, dim: usize) -> Result<()> {
        (**self).begin(n, dim)
    }

    fn record(&mut self, x: &[T], log_weight: T, accepted: bool) -> Result<()> {
        (**self).record(x, log_weight, accepted)
    }
}

/// In-memory chain output; states are stored row-major `n x dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace<T> {
    pub dim: usize,
    pub states: Vec<T>,
    /// Zero for kernels that target `pi` directly.
    pub log_weights: Vec<T>,
    pub accepts: Vec<bool>,
    pub acc_rate: f64,
}

impl<T: Scalar> ChainTrace<T> {
    pub fn empty(dim: usize) -> Self {
        Self { dim, states: Vec::new(), log_weights: Vec::new(), accepts: Vec::new(), acc_rate: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn state(&self, t: usize) -> &[T] {
        &self.states[t * self.dim..(t + 1) * self.dim]
    }

    /// Component `i` of every state.
    pub fn component(&self, i: usize) -> Vec<T> {
        self.states.iter().skip(i).step_by(self.dim).copied().collect()
    }
}

impl<T: Scalar> TraceObserver<T> for ChainTrace<T> {
    fn begin(&mut self, n: usize, dim: usize) -> Result<()> {
        self.dim = dim;
        self.states.reserve(n * dim);
        self.log_weights.reserve(n);
        self.accepts.reserve(n);
        Ok(())
    }

    fn record(&mut self, x: &[T], log_weight: T, accepted: bool) -> Result<()> {
        self.states.extend_from_slice(x);
        self.log_weights.push(log_weight);
        self.accepts.push(accepted);
        let k = self.accepts.len() as f64;
        self.acc_rate += (f64::from(u8::from(accepted)) - self.acc_rate) / k;
        Ok(())
    }
}

/// Summary of a finished chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary<T> {
    pub kind: SamplerKind,
    pub n: usize,
    pub warmup: usize,
    pub lambda: T,
    pub step: T,
    pub acc_rate: f64,
    pub seed: u64,
    pub stream: u64,
}

/// Chain position and kernel settings, advanced one iteration at a time.
pub struct Chain<'a, T: Scalar, M: TargetModel<T> + ?Sized> {
    view: EnvelopeView<'a, T, M>,
    kind: SamplerKind,
    step: T,
    leapfrog: LeapfrogPolicy,
    state: ChainState<T>,
}

impl<'a, T: Scalar, M: TargetModel<T> + ?Sized> Chain<'a, T, M> {
    pub fn new(
        view: EnvelopeView<'a, T, M>,
        kind: SamplerKind,
        step: T,
        leapfrog: LeapfrogPolicy,
        start: Vec<T>,
    ) -> Result<Self> {
        check_dim(view.dim(), start.len())?;
        if !(step > T::zero() && step.is_finite()) {
            return Err(invalid(format!("step size must be positive, got {step}")));
        }
        leapfrog.validate()?;
        let state = ChainState::new(&view, start)?;
        Ok(Self { view, kind, step, leapfrog, state })
    }

    pub fn state(&self) -> &ChainState<T> {
        &self.state
    }

    pub fn step_size(&self) -> T {
        self.step
    }

    pub fn set_step_size(&mut self, step: T) {
        self.step = step;
    }

    pub fn log_weight(&self) -> T {
        if self.kind.targets_envelope() {
            self.state.log_weight()
        } else {
            T::zero()
        }
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<bool> {
        let (s, v, h) = (&mut self.state, &self.view, self.step);
        match self.kind {
            SamplerKind::MyMala => mala_step(s, v, h, Invariant::Envelope, rng),
            SamplerKind::PMala => mala_step(s, v, h, Invariant::Target, rng),
            SamplerKind::MyBarker => my_barker_step(s, v, h, rng),
            SamplerKind::MyHmc => {
                let l = self.leapfrog.draw(rng);
                hmc_step(s, v, h, l, Invariant::Envelope, rng)
            }
            SamplerKind::PHmc => {
                let l = self.leapfrog.draw(rng);
                hmc_step(s, v, h, l, Invariant::Target, rng)
            }
        }
    }
}

/// Approximate mode of `psi` by proximal-point iterations from the origin.
///
/// The step is `max(lambda, 1)`: steps as small as `lambda` barely move for
/// the small smoothing levels used in practice, and every step size keeps
/// the minimizers of `psi` as fixed points.
pub fn warm_start_point<T, M>(model: &M, lambda: T, iterations: usize) -> Result<Vec<T>>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
{
    let step = lambda.max(T::one());
    let mut x = vec![T::zero(); model.dim()];
    for _ in 0..iterations {
        let next = model.prox(&x, step)?;
        let moved = dist_sq(&next, &x).sqrt();
        let scale = T::one() + norm_sq(&next).sqrt();
        x = next;
        if moved <= T::of(1e-12) * scale {
            break;
        }
    }
    Ok(x)
}

pub fn initial_point<T, M>(model: &M, lambda: T, policy: &WarmStart<T>) -> Result<Vec<T>>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
{
    match policy {
        WarmStart::Mode { iterations } => warm_start_point(model, lambda, *iterations),
        WarmStart::Origin => Ok(vec![T::zero(); model.dim()]),
        WarmStart::Point(x) => {
            check_dim(model.dim(), x.len())?;
            Ok(x.clone())
        }
    }
}

/// Iterations after warmup over which at least one acceptance is required.
pub const STUCK_WINDOW: usize = 1000;

/// Runs a chain and streams every post-warmup draw to `observer`.
pub fn run_chain_with<T, M, O>(config: &SamplerConfig<T>, model: &M, lambda: T, observer: &mut O) -> Result<ChainSummary<T>>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
    O: TraceObserver<T> + ?Sized,
{
    config.validate()?;
    let view = EnvelopeView::new(model, lambda)?;
    let step = config.resolved_step(lambda);
    let start = initial_point(model, lambda, &config.warm_start)?;
    let mut chain = Chain::new(view, config.kind, step, config.leapfrog, start)?;
    let mut rng = config.rng();
    for _ in 0..config.warmup {
        chain.advance(&mut rng)?;
    }
    observer.begin(config.n, model.dim())?;
    let mut accepted = 0usize;
    for t in 0..config.n {
        let ok = chain.advance(&mut rng)?;
        accepted += usize::from(ok);
        if t + 1 == STUCK_WINDOW && accepted == 0 {
            return Err(Error::SamplerStuck(STUCK_WINDOW));
        }
        observer.record(&chain.state().x, chain.log_weight(), ok)?;
    }
    let acc_rate = if config.n == 0 { 0.0 } else { accepted as f64 / config.n as f64 };
    Ok(ChainSummary {
        kind: config.kind,
        n: config.n,
        warmup: config.warmup,
        lambda,
        step,
        acc_rate,
        seed: config.seed,
        stream: config.stream,
    })
}

/// Runs a chain and keeps the full trace in memory.
pub fn run_chain<T, M>(config: &SamplerConfig<T>, model: &M, lambda: T) -> Result<ChainTrace<T>>
where
    T: Scalar,
    M: TargetModel<T> + ?Sized,
{
    let mut trace = ChainTrace::empty(model.dim());
    run_chain_with(config, model, lambda, &mut trace)?;
    Ok(trace)
}
