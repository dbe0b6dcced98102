//! Moreau-Yosida importance sampling.
//!
//! A nonsmooth log-concave target `pi ∝ exp(-psi)` is replaced by its
//! Moreau-Yosida envelope `pi^lambda ∝ exp(-psi^lambda)`, which has a
//! Lipschitz gradient. Gradient-based MCMC runs on the envelope and the
//! draws are reweighted by `exp(psi^lambda - psi)` to estimate expectations
//! under `pi`.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below fix the common double-precision case.

pub mod envelope;
pub mod error;
pub mod estimators;
pub mod io;
pub mod models;
pub mod prox;
pub mod samplers;
pub mod scalar;
pub mod tuning;

pub use envelope::{EnvelopePoint, EnvelopeView, TargetModel};
pub use error::{Error, Result};
pub use estimators::{EstimateReport, Functional, QuantileRequest, WeightedSample};
pub use samplers::{ChainTrace, SamplerConfig, SamplerKind};
pub use scalar::Scalar;
pub use tuning::{StepTuning, TuneResult};

pub type EnvelopePointF64 = EnvelopePoint<f64>;
pub type ChainTraceF64 = ChainTrace<f64>;
pub type SamplerConfigF64 = SamplerConfig<f64>;
pub type WeightedSampleF64 = WeightedSample<f64>;
pub type EstimateReportF64 = EstimateReport<f64>;
pub type TuneResultF64 = TuneResult<f64>;
pub type StepTuningF64 = StepTuning<f64>;
pub type GaussianModelF64 = prox::GaussianModel<f64>;
pub type SeparableModelF64 = prox::SeparableModel<f64>;
pub type TrendfilterModelF64 = prox::TrendfilterModel<f64>;
pub type NuclearModelF64 = prox::NuclearModel<f64>;
pub type PoissonModelF64 = prox::PoissonModel<f64>;
