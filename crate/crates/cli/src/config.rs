//! Experiment configuration: one JSON document, overridable by dotted path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use myis::estimators::{Functional, QuantileRequest};
use myis::io::TraceFormat;
use myis::models::DEFAULT_TREND_ALPHA;
use myis::samplers::{LeapfrogPolicy, WarmStart};
use myis::tuning::{LambdaSettings, StepSettings};
use myis::{SamplerConfig, SamplerKind};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Toy {
        beta: u32,
        d: usize,
    },
    Trendfilter {
        #[serde(default = "default_trend_m")]
        m: usize,
        #[serde(default = "default_trend_sigma2")]
        sigma2: f64,
        #[serde(default = "default_trend_alpha")]
        alpha: f64,
        #[serde(default = "default_trend_k")]
        k: usize,
        #[serde(default = "default_trend_seed")]
        seed: u64,
        /// Observations as a one-column CSV; replaces the synthetic signal.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<PathBuf>,
    },
    Nuclear {
        #[serde(default = "default_board_size")]
        size: usize,
        #[serde(default = "default_board_block")]
        block: usize,
        #[serde(default = "default_board_sigma2")]
        sigma2: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default = "default_board_seed")]
        seed: u64,
        /// Observed matrix as a headerless numeric CSV.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<PathBuf>,
    },
    Poisson {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_sigma_eta")]
        sigma_eta: f64,
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "default_per_class")]
        per_class: usize,
        #[serde(default)]
        mu_star: f64,
        #[serde(default = "default_poisson_seed")]
        seed: u64,
        /// `class_id,count` rows.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<PathBuf>,
    },
    /// Zero-mean Gaussian given by a full covariance, its diagonal, or a
    /// common variance.
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariance: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variances: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
        #[serde(default = "one")]
        variance: f64,
    },
}

fn default_trend_m() -> usize {
    100
}
fn default_trend_sigma2() -> f64 {
    9.0
}
fn default_trend_alpha() -> f64 {
    DEFAULT_TREND_ALPHA
}
fn default_trend_k() -> usize {
    1
}
fn default_trend_seed() -> u64 {
    myis::models::TrendSignal::default().seed
}
fn default_board_size() -> usize {
    64
}
fn default_board_block() -> usize {
    8
}
fn default_board_sigma2() -> f64 {
    0.01
}
fn default_board_seed() -> u64 {
    myis::models::CheckerboardSpec::default().seed
}
fn default_classes() -> usize {
    50
}
fn default_sigma_eta() -> f64 {
    3.0
}
fn default_c() -> f64 {
    10.0
}
fn default_per_class() -> usize {
    5
}
fn default_poisson_seed() -> u64 {
    myis::models::PoissonDataSpec::default().seed
}
fn one() -> f64 {
    1.0
}

/// How the smoothing level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaChoice {
    Fixed(f64),
    Named(LambdaRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// Closed-form optimum for Gaussian models, window search otherwise.
    Auto,
    /// Always search for `n_e/n` in the tuning window.
    Window,
}

impl Default for LambdaChoice {
    fn default() -> Self {
        Self::Named(LambdaRule::Auto)
    }
}

/// Kernel settings; the chain length lives at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub kind: SamplerKind,
    /// Fixed step; when absent the step is adapted (or the kernel default
    /// is used if `adapt` is false).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default = "yes")]
    pub adapt: bool,
    #[serde(default)]
    pub leapfrog: LeapfrogPolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<WarmStart<f64>>,
}

fn yes() -> bool {
    true
}
fn default_warmup() -> usize {
    1000
}

impl SamplerSection {
    pub fn sampler_config(&self, n: usize) -> SamplerConfig<f64> {
        let mut cfg = SamplerConfig::new(self.kind, n)
            .with_seed(self.seed)
            .with_warmup(self.warmup)
            .with_leapfrog(self.leapfrog);
        cfg.step = self.step;
        if let Some(w) = &self.warm_start {
            cfg = cfg.with_warm_start(w.clone());
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub sampler: SamplerSection,
    #[serde(default)]
    pub lambda: LambdaChoice,
    pub n: usize,
    #[serde(default = "one_replicate")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub functional: Functional,
    #[serde(default)]
    pub quantile_requests: Vec<QuantileRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default = "yes")]
    pub write_trace: bool,
    #[serde(default)]
    pub trace_format: TraceFormat,
    #[serde(default)]
    pub tuning: LambdaSettings,
    #[serde(default)]
    pub step_tuning: StepSettings,
}

fn one_replicate() -> usize {
    1
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(CliError::Config("n must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        if let LambdaChoice::Fixed(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(CliError::Config(format!("lambda must be positive, got {l}")));
            }
        }
        Ok(())
    }

    /// Relative data paths are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        let data = match &mut self.model {
            ModelSpec::Trendfilter { data, .. } | ModelSpec::Nuclear { data, .. } | ModelSpec::Poisson { data, .. } => data,
            _ => return,
        };
        if let Some(p) = data {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Parses `path=value`; the value is read as JSON when possible and as a
/// plain string otherwise.
pub fn parse_override(spec: &str) -> Result<(String, Value), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{spec}' is not of the form path=value")))?;
    if path.is_empty() {
        return Err(CliError::Usage(format!("override '{spec}' has an empty path")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path.to_string(), value))
}

/// Sets `path` (dot separated, numeric segments index arrays) inside `doc`,
/// creating objects along the way.
pub fn apply_override(doc: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut node = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| CliError::Usage(format!("'{part}' in '{path}' must index an array")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::Usage(format!("index {idx} out of range (len {len}) in '{path}'")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::Usage(format!("cannot descend into '{part}' of '{path}'"))),
        };
    }
    Ok(())
}

pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for (p, v) in overrides {
        apply_override(&mut doc, p, v.clone())?;
    }
    let mut cfg: RunConfig =
        serde_json::from_value(doc).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({"model": {"type": "toy", "beta": 1, "d": 3}, "sampler": {"kind": "my_mala"}, "n": 100})
    }

    #[test]
    fn defaults_fill_in() {
        let cfg: RunConfig = serde_json::from_value(minimal()).unwrap();
        assert_eq!(cfg.lambda, LambdaChoice::Named(LambdaRule::Auto));
        assert_eq!(cfg.replicates, 1);
        assert!(cfg.sampler.adapt);
        assert_eq!(cfg.functional, Functional::Identity);
    }

    #[test]
    fn lambda_forms() {
        let mut v = minimal();
        v["lambda"] = json!(0.25);
        let cfg: RunConfig = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(cfg.lambda, LambdaChoice::Fixed(0.25));
        v["lambda"] = json!("window");
        let cfg: RunConfig = serde_json::from_value(v).unwrap();
        assert_eq!(cfg.lambda, LambdaChoice::Named(LambdaRule::Window));
    }

    #[test]
    fn dotted_overrides() {
        let mut v = minimal();
        let (p, val) = parse_override("sampler.seed=17").unwrap();
        apply_override(&mut v, &p, val).unwrap();
        let (p, val) = parse_override("model.type=trendfilter").unwrap();
        apply_override(&mut v, &p, val).unwrap();
        let (p, val) = parse_override("tuning.window=[0.5,0.7]").unwrap();
        apply_override(&mut v, &p, val).unwrap();
        assert_eq!(v["sampler"]["seed"], json!(17));
        assert_eq!(v["model"]["type"], json!("trendfilter"));
        let (p, val) = parse_override("tuning.window.1=0.9").unwrap();
        apply_override(&mut v, &p, val).unwrap();
        assert_eq!(v["tuning"]["window"], json!([0.5, 0.9]));
        assert!(parse_override("novalue").is_err());
        assert!(apply_override(&mut v, "n.x", json!(1)).is_err());
    }

    #[test]
    fn zero_n_rejected() {
        let mut v = minimal();
        v["n"] = json!(0);
        let cfg: RunConfig = serde_json::from_value(v).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn round_trips() {
        let cfg: RunConfig = serde_json::from_value(minimal()).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
