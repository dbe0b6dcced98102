//! Output directory handling. Every file gets a `<name>.meta.json` sidecar.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const VERSION: &str = env!("MYIS_BUILD_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub file: String,
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub runtime_secs: f64,
    pub config: Value,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

pub struct Output {
    root: PathBuf,
    command: &'static str,
    config: Value,
    seed: u64,
    started: Instant,
}

impl Output {
    pub fn create(root: PathBuf, command: &'static str, config: Value, seed: u64) -> Result<Self, CliError> {
        fs::create_dir_all(&root).map_err(|e| CliError::Runtime(format!("{}: {e}", root.display())))?;
        Ok(Self { root, command, config, seed, started: Instant::now() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes the sidecar for a file already present in the directory.
    pub fn sidecar(&self, name: &str, details: Value) -> Result<(), CliError> {
        let meta = Sidecar {
            file: name.to_string(),
            command: self.command.to_string(),
            version: VERSION.to_string(),
            seed: self.seed,
            runtime_secs: self.started.elapsed().as_secs_f64(),
            config: self.config.clone(),
            details,
        };
        write_text(&self.path(&format!("{name}.meta.json")), &to_json(&meta)?)
    }

    pub fn json<S: Serialize>(&self, name: &str, value: &S, details: Value) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        write_text(&path, &to_json(value)?)?;
        self.sidecar(name, details)?;
        Ok(path)
    }

    /// Writes a CSV from a header and rows of already formatted cells.
    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>], details: Value) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.sidecar(name, details)?;
        Ok(path)
    }
}

/// Pretty JSON with a trailing newline; stable under parse and rewrite.
pub fn to_json<S: Serialize>(value: &S) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Output root: the flag, then the config, then `MYIS_OUTPUT_DIR`, then
/// `myis-output` in the working directory.
pub fn resolve_root(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    if let Some(p) = flag.or(config) {
        return p.to_path_buf();
    }
    match std::env::var_os("MYIS_OUTPUT_DIR") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("myis-output"),
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
