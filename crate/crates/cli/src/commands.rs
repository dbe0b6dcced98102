use std::collections::BTreeSet;
use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use myis::estimators::{acf, kong_ess_from_log_weights, relative_efficiency, StreamingEstimator};
use myis::io::{read_trace, TraceWriter};
use myis::samplers::{run_chain, run_chain_with, WarmStart};
use myis::tuning::{gaussian_lambda_star, tune_lambda, tune_step, StepTuning, TuneResult, TUNING_STREAM};
use myis::{EstimateReport, Functional, QuantileRequest, SamplerConfig, SamplerKind, TargetModel};

use crate::config::{LambdaChoice, LambdaRule, RunConfig};
use crate::error::CliError;
use crate::model::{build, BuiltModel};
use crate::output::{fmt_f64, Output};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMethod {
    Fixed,
    GaussianOptimal,
    Window,
    /// Taken from the other side of a comparison.
    Inherited,
}

/// Contents of `tune.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneFile {
    pub method: LambdaMethod,
    pub lambda: f64,
    pub step: f64,
    /// Pilot `n_e/n` at the chosen `lambda`; absent for fixed `lambda` and
    /// for kernels that target `pi` directly.
    pub ne_ratio: Option<f64>,
    pub in_window: Option<bool>,
    pub step_tuning: Option<StepTuning<f64>>,
    pub search: Option<TuneResult<f64>>,
}

/// Resolved kernel settings plus the warm start left by adaptation.
pub struct Plan {
    pub tune: TuneFile,
    pub config: SamplerConfig<f64>,
}

fn needs_search(cfg: &RunConfig) -> bool {
    !matches!(cfg.lambda, LambdaChoice::Fixed(_))
}

pub fn plan(cfg: &RunConfig, built: &BuiltModel, inherited: Option<f64>) -> Result<Plan, CliError> {
    let model = &built.model;
    let kind = cfg.sampler.kind;
    let base = cfg.sampler.sampler_config(cfg.n);
    let mut search = None;
    let (method, lambda) = match (cfg.lambda, &built.gaussian_eigenvalues) {
        (LambdaChoice::Fixed(l), _) => (LambdaMethod::Fixed, l),
        (_, _) if !kind.targets_envelope() => match inherited {
            Some(l) => (LambdaMethod::Inherited, l),
            None => {
                return Err(CliError::Config(format!(
                    "{kind} samples the target directly, so lambda cannot be searched for; set lambda to a number"
                )))
            }
        },
        (LambdaChoice::Named(LambdaRule::Auto), Some(eig)) => (LambdaMethod::GaussianOptimal, gaussian_lambda_star(eig)?),
        (LambdaChoice::Named(_), _) => {
            let mut settings = cfg.tuning;
            settings.step = cfg.step_tuning;
            settings.adapt_step = cfg.sampler.adapt && cfg.sampler.step.is_none();
            let result = tune_lambda(model, &base, &settings)?;
            let l = result.lambda;
            search = Some(result);
            (LambdaMethod::Window, l)
        }
    };
    let mut config = base;
    let mut step_tuning = None;
    if cfg.sampler.adapt && cfg.sampler.step.is_none() {
        let mut start = config.clone();
        if let Some(s) = &search {
            start = start.with_step(s.step);
        }
        let tuned = tune_step(model, lambda, &start, &cfg.step_tuning)?;
        if !tuned.converged {
            warn!("step adaptation stopped at {} with acceptance {:.3} (target {})", tuned.step, tuned.acc_rate, tuned.target);
        }
        config = config.with_step(tuned.step);
        if cfg.sampler.warm_start.is_none() {
            config = config.with_warm_start(WarmStart::Point(tuned.state.clone()));
        }
        step_tuning = Some(tuned);
    }
    let step = config.resolved_step(lambda);
    let (ne_ratio, in_window) = match (&search, method) {
        (Some(s), _) => (Some(s.ne_ratio), Some(s.in_window)),
        (None, LambdaMethod::GaussianOptimal) => {
            let pilot = SamplerConfig { n: cfg.tuning.pilot_n, stream: TUNING_STREAM, ..config.clone() };
            let trace = run_chain(&pilot, model, lambda)?;
            let ne = kong_ess_from_log_weights(&trace.log_weights)? / pilot.n as f64;
            (Some(ne), None)
        }
        _ => (None, None),
    };
    Ok(Plan { tune: TuneFile { method, lambda, step, ne_ratio, in_window, step_tuning, search }, config })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn tune_details(t: &TuneFile) -> Value {
    json!({ "lambda": t.lambda, "step": t.step, "method": t.method })
}

/// Returns whether the search (if any) ended inside the window.
pub fn cmd_tune(cfg: &RunConfig, out: &Output) -> Result<bool, CliError> {
    let built = build(&cfg.model)?;
    let plan = plan(cfg, &built, None)?;
    out.json("tune.json", &plan.tune, tune_details(&plan.tune))?;
    let t = &plan.tune;
    println!(
        "lambda {} ({:?}), step {}, n_e/n {}",
        t.lambda,
        t.method,
        t.step,
        t.ne_ratio.map_or("n/a".to_string(), |v| format!("{v:.3}"))
    );
    if t.in_window == Some(false) {
        eprintln!("n_e/n never entered the window {:?}; probes:", cfg.tuning.window);
        for p in t.search.iter().flat_map(|s| &s.probes) {
            eprintln!("  lambda {:e}: n_e/n {:.3}, step {:e}, acceptance {:.3}", p.lambda, p.ne_ratio, p.step, p.acc_rate);
        }
        return Ok(false);
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub id: u64,
    pub acc_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    pub report: EstimateReport<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SamplerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub replicates: Vec<ReplicateReport>,
}

fn run_replicate(
    model: &dyn TargetModel<f64>,
    config: &SamplerConfig<f64>,
    lambda: f64,
    cfg: &RunConfig,
    id: u64,
    out: &Output,
) -> Result<ReplicateReport, CliError> {
    let rcfg = config.for_replicate(id);
    let mut est = StreamingEstimator::new(cfg.functional.clone(), cfg.batch_size, cfg.quantile_requests.clone());
    let (summary, trace) = if cfg.write_trace {
        let name = format!("trace_{id}.{}", cfg.trace_format.extension());
        let mut writer = TraceWriter::create(out.path(&name), cfg.trace_format)?;
        let summary = run_chain_with(&rcfg, &model, lambda, &mut (&mut est, &mut writer))?;
        writer.finish()?;
        out.sidecar(&name, json!({ "replicate": id, "stream": rcfg.stream, "acc_rate": summary.acc_rate }))?;
        (summary, Some(name))
    } else {
        (run_chain_with(&rcfg, &model, lambda, &mut est)?, None)
    };
    info!("replicate {id}: acceptance {:.3}", summary.acc_rate);
    Ok(ReplicateReport { id, acc_rate: summary.acc_rate, trace, report: est.finish()? })
}

pub fn cmd_run(cfg: &RunConfig, out: &Output, jobs: usize) -> Result<RunReport, CliError> {
    let built = build(&cfg.model)?;
    let plan = plan(cfg, &built, None)?;
    if plan.tune.method != LambdaMethod::Fixed || plan.tune.step_tuning.is_some() {
        out.json("tune.json", &plan.tune, tune_details(&plan.tune))?;
    }
    let lambda = plan.tune.lambda;
    let model: &dyn TargetModel<f64> = &*built.model;
    let results: Vec<Result<ReplicateReport, CliError>> = pool(jobs)?.install(|| {
        (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|id| run_replicate(model, &plan.config, lambda, cfg, id, out))
            .collect()
    });
    let replicates = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let report = RunReport { kind: Some(cfg.sampler.kind), lambda: Some(lambda), step: Some(plan.tune.step), replicates };
    write_report(out, &report)?;
    Ok(report)
}

fn write_report(out: &Output, report: &RunReport) -> Result<(), CliError> {
    out.json("report.json", report, json!({ "lambda": report.lambda, "step": report.step }))?;
    let mut rows = Vec::new();
    for r in &report.replicates {
        let e = &r.report;
        for i in 0..e.theta_hat.len() {
            rows.push(vec![
                r.id.to_string(),
                i.to_string(),
                fmt_f64(e.theta_hat[i]),
                fmt_f64(e.mcse[i]),
                fmt_f64(e.xi_diag[i]),
                e.mcmc_ess[i].map(fmt_f64).unwrap_or_default(),
            ]);
        }
    }
    out.csv("components.csv", &["replicate", "component", "theta_hat", "mcse", "xi_diag", "mcmc_ess"], &rows, Value::Null)?;
    let alphas: BTreeSet<u64> = report
        .replicates
        .iter()
        .flat_map(|r| r.report.quantiles.iter().map(|q| q.alpha.to_bits()))
        .collect();
    if alphas.is_empty() {
        return Ok(());
    }
    let mut alphas: Vec<f64> = alphas.into_iter().map(f64::from_bits).collect();
    alphas.sort_by(|a, b| a.total_cmp(b));
    let header: Vec<String> =
        ["replicate", "component"].iter().map(|s| s.to_string()).chain(alphas.iter().map(|a| format!("q{a}"))).collect();
    let mut rows = Vec::new();
    for r in &report.replicates {
        let comps: BTreeSet<usize> = r.report.quantiles.iter().map(|q| q.component).collect();
        for c in comps {
            let mut row = vec![r.id.to_string(), c.to_string()];
            row.extend(alphas.iter().map(|a| r.report.quantile(c, *a).map(fmt_f64).unwrap_or_default()));
            rows.push(row);
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("band.csv", &header, &rows, Value::Null)?;
    Ok(())
}

/// Estimates from saved traces.
pub fn cmd_report(
    traces: &[PathBuf],
    functional: &Functional,
    batch_size: Option<usize>,
    requests: &[QuantileRequest],
    out: &Output,
) -> Result<RunReport, CliError> {
    let mut replicates = Vec::new();
    for (id, path) in traces.iter().enumerate() {
        let trace = read_trace(path).map_err(|e| CliError::Config(e.to_string()))?;
        let report = EstimateReport::from_trace(&trace, functional, batch_size, requests)?;
        replicates.push(ReplicateReport {
            id: id as u64,
            acc_rate: trace.acc_rate,
            trace: Some(path.display().to_string()),
            report,
        });
    }
    let report = RunReport { kind: None, lambda: None, step: None, replicates };
    write_report(out, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// Mean over components of `tau2_b / tau2_a`; above 1 when method A is
    /// more efficient.
    pub eff_rel: f64,
    pub median_ratio: f64,
    pub ratios: Vec<f64>,
    pub tau2_a: Vec<f64>,
    pub tau2_b: Vec<f64>,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub step_a: f64,
    pub step_b: f64,
}

pub const MAX_ACF_LAG: usize = 50;

/// Replicate-averaged `Xi` diagonal and per-component ACF.
fn replicate_stats(
    model: &dyn TargetModel<f64>,
    plan: &Plan,
    cfg: &RunConfig,
    first_stream: u64,
    jobs: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), CliError> {
    let dim = cfg.functional.output_dim(model.dim())?;
    let lag = MAX_ACF_LAG.min(cfg.n.saturating_sub(1));
    let lambda = plan.tune.lambda;
    let runs: Vec<Result<(Vec<f64>, Vec<Vec<f64>>), CliError>> = pool(jobs)?.install(|| {
        (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| {
                let trace = run_chain(&plan.config.for_replicate(first_stream + r), &model, lambda)?;
                let report = EstimateReport::from_trace(&trace, &cfg.functional, cfg.batch_size, &[])?;
                let mut series = vec![Vec::with_capacity(trace.len()); dim];
                let mut buf = vec![0.0; dim];
                for t in 0..trace.len() {
                    cfg.functional.apply(trace.state(t), &mut buf);
                    for (s, v) in series.iter_mut().zip(&buf) {
                        s.push(*v);
                    }
                }
                let acfs = series
                    .iter()
                    .map(|s| acf(s, lag).unwrap_or_else(|_| vec![f64::NAN; lag + 1]))
                    .collect();
                Ok((report.xi_diag, acfs))
            })
            .collect()
    });
    let reps = cfg.replicates as f64;
    let mut tau = vec![0.0; dim];
    let mut acfs = vec![vec![0.0; lag + 1]; dim];
    for run in runs {
        let (xi, a) = run?;
        for (t, v) in tau.iter_mut().zip(xi) {
            *t += v / reps;
        }
        for (acc, comp) in acfs.iter_mut().zip(a) {
            for (x, v) in acc.iter_mut().zip(comp) {
                *x += v / reps;
            }
        }
    }
    Ok((tau, acfs))
}

pub fn cmd_compare(a: &RunConfig, b: &RunConfig, out: &Output, jobs: usize) -> Result<CompareReport, CliError> {
    let (built_a, built_b) = (build(&a.model)?, build(&b.model)?);
    if built_a.model.dim() != built_b.model.dim() {
        return Err(CliError::Config("compared models have different dimensions".into()));
    }
    let a_inherits = needs_search(a) && !a.sampler.kind.targets_envelope();
    let (plan_a, plan_b) = if !a_inherits {
        let pa = plan(a, &built_a, None)?;
        let pb = plan(b, &built_b, Some(pa.tune.lambda))?;
        (pa, pb)
    } else {
        let pb = plan(b, &built_b, None)?;
        let pa = plan(a, &built_a, Some(pb.tune.lambda))?;
        (pa, pb)
    };
    out.json("tune_a.json", &plan_a.tune, tune_details(&plan_a.tune))?;
    out.json("tune_b.json", &plan_b.tune, tune_details(&plan_b.tune))?;
    let (tau_a, acf_a) = replicate_stats(&*built_a.model, &plan_a, a, 0, jobs)?;
    // Method B gets its own replicate streams so a self-comparison is not
    // trivially exact.
    let (tau_b, acf_b) = replicate_stats(&*built_b.model, &plan_b, b, a.replicates as u64, jobs)?;
    if tau_a.len() != tau_b.len() {
        return Err(CliError::Config("compared functionals have different dimensions".into()));
    }
    let ratios: Vec<f64> = tau_b.iter().zip(&tau_a).map(|(tb, ta)| tb / ta).collect();
    let eff_rel = relative_efficiency(&tau_a, &tau_b)?;
    let mut sorted = ratios.clone();
    sorted.sort_by(|x, y| x.total_cmp(y));
    let k = sorted.len();
    let median_ratio = if k % 2 == 1 { sorted[k / 2] } else { 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]) };
    let report = CompareReport {
        eff_rel,
        median_ratio,
        ratios: ratios.clone(),
        tau2_a: tau_a,
        tau2_b: tau_b,
        lambda_a: plan_a.tune.lambda,
        lambda_b: plan_b.tune.lambda,
        step_a: plan_a.tune.step,
        step_b: plan_b.tune.step,
    };
    let details = json!({ "eff_rel": eff_rel, "replicates_a": a.replicates, "replicates_b": b.replicates });
    out.json("compare.json", &report, details.clone())?;
    let lags = acf_a.first().map_or(0, Vec::len).min(acf_b.first().map_or(0, Vec::len));
    let mut rows = Vec::new();
    for (i, r) in ratios.iter().enumerate() {
        for lag in 0..lags {
            rows.push(vec![i.to_string(), fmt_f64(*r), lag.to_string(), fmt_f64(acf_a[i][lag] - acf_b[i][lag])]);
        }
    }
    out.csv("compare.csv", &["component", "ratio", "acf_lag", "acf_diff"], &rows, details)?;
    println!("eff_rel {eff_rel:.4}, median ratio {median_ratio:.4}");
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::to_json;
    use myis::samplers::run_chain;
    use myis::QuantileRequest;

    #[test]
    fn report_json_round_trips_byte_identically() {
        let model = myis::models::make_toy::<f64>(myis::models::ToySpec { beta: 1, d: 3 }).unwrap();
        let cfg = SamplerConfig::new(SamplerKind::MyMala, 500).with_seed(4);
        let trace = run_chain(&cfg, &model, 0.3).unwrap();
        let requests = vec![QuantileRequest { component: Some(1), alpha: 0.1 }];
        let report = EstimateReport::from_trace(&trace, &Functional::Identity, None, &requests).unwrap();
        let run = RunReport {
            kind: Some(SamplerKind::MyMala),
            lambda: Some(0.3),
            step: Some(0.6),
            replicates: vec![ReplicateReport { id: 0, acc_rate: trace.acc_rate, trace: None, report }],
        };
        let first = to_json(&run).unwrap();
        let parsed: RunReport = serde_json::from_str(&first).unwrap();
        assert_eq!(parsed, run);
        assert_eq!(to_json(&parsed).unwrap(), first);
    }

    #[test]
    fn tune_file_round_trips() {
        let t = TuneFile {
            method: LambdaMethod::GaussianOptimal,
            lambda: 0.1 + 0.2,
            step: 1.0 / 3.0,
            ne_ratio: Some(0.9216),
            in_window: None,
            step_tuning: None,
            search: None,
        };
        let text = to_json(&t).unwrap();
        assert_eq!(serde_json::from_str::<TuneFile>(&text).unwrap(), t);
    }
}
