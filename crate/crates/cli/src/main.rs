//! `myis`: tune, run, compare and report MY-IS experiments.

mod commands;
mod config;
mod error;
mod model;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use myis::{Functional, QuantileRequest};

use crate::config::{apply_override, parse_override, RunConfig};
use crate::error::CliError;
use crate::output::{resolve_root, Output, VERSION};

#[derive(Parser)]
#[command(name = "myis", version = VERSION, about = "Moreau-Yosida importance sampling experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Worker threads for replicate chains.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory (default: config `output_dir`, then $MYIS_OUTPUT_DIR).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Overrides `sampler.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a config field, e.g. `--set model.d=10`.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Choose lambda and the step size; writes tune.json.
    Tune {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the chains and write report.json, traces and CSV summaries.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Relative efficiency of the `--config` method over the `--against` one.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        against: PathBuf,
    },
    /// Recompute estimates from saved traces.
    Report {
        /// Supplies the functional, batch size and quantile requests.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, Value)>, CliError> {
        let mut all: Vec<(String, Value)> =
            self.overrides.iter().map(|s| parse_override(s)).collect::<Result<_, _>>()?;
        if let Some(seed) = self.seed {
            all.push(("sampler.seed".into(), Value::from(seed)));
        }
        Ok(all)
    }

    fn load(&self, path: &Path) -> Result<RunConfig, CliError> {
        config::load(path, &self.overrides()?)
    }

    fn output(&self, command: &'static str, cfg: &RunConfig) -> Result<Output, CliError> {
        let root = resolve_root(self.output.as_deref(), cfg.output_dir.as_deref());
        Output::create(root, command, serde_json::to_value(cfg)?, cfg.sampler.seed)
    }

    fn jobs(&self) -> Result<usize, CliError> {
        if self.jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        Ok(self.jobs)
    }
}

/// Loads only the estimation fields of a config, so `report` works with any
/// file carrying them.
fn report_settings(common: &Common, path: Option<&Path>) -> Result<(Functional, Option<usize>, Vec<QuantileRequest>, Value), CliError> {
    let Some(path) = path else {
        return Ok((Functional::Identity, None, Vec::new(), Value::Null));
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for (p, v) in common.overrides()? {
        apply_override(&mut doc, &p, v)?;
    }
    let field = |name: &str| doc.get(name).cloned().unwrap_or(Value::Null);
    let bad = |e: serde_json::Error| CliError::Config(format!("{}: {e}", path.display()));
    let functional = match field("functional") {
        Value::Null => Functional::Identity,
        v => serde_json::from_value(v).map_err(bad)?,
    };
    let batch = serde_json::from_value(field("batch_size")).map_err(bad)?;
    let requests = match field("quantile_requests") {
        Value::Null => Vec::new(),
        v => serde_json::from_value(v).map_err(bad)?,
    };
    Ok((functional, batch, requests, doc))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = &cli.common;
    match &cli.command {
        Command::Tune { config } => {
            let cfg = common.load(config)?;
            let out = common.output("tune", &cfg)?;
            if !commands::cmd_tune(&cfg, &out)? {
                return Err(CliError::Runtime("lambda search did not reach the n_e/n window".into()));
            }
        }
        Command::Run { config } => {
            let cfg = common.load(config)?;
            let out = common.output("run", &cfg)?;
            let report = commands::cmd_run(&cfg, &out, common.jobs()?)?;
            for r in &report.replicates {
                println!(
                    "replicate {}: acceptance {:.3}, n_e/n {:.3}",
                    r.id,
                    r.acc_rate,
                    r.report.ne_ratio()
                );
            }
            println!("wrote {}", out.root().display());
        }
        Command::Compare { config, against } => {
            let a = common.load(config)?;
            let b = common.load(against)?;
            let root = resolve_root(common.output.as_deref(), a.output_dir.as_deref());
            let both = serde_json::json!({ "a": a, "b": b });
            let out = Output::create(root, "compare", both, a.sampler.seed)?;
            commands::cmd_compare(&a, &b, &out, common.jobs()?)?;
        }
        Command::Report { config, traces } => {
            let (functional, batch, requests, doc) = report_settings(common, config.as_deref())?;
            let configured = doc.get("output_dir").and_then(Value::as_str).map(PathBuf::from);
            let root = resolve_root(common.output.as_deref(), configured.as_deref());
            let out = Output::create(root, "report", doc, common.seed.unwrap_or(0))?;
            commands::cmd_report(traces, &functional, batch, &requests, &out)?;
            println!("wrote {}", out.root().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
