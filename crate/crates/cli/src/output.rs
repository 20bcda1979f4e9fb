//! File emission. Floats are written in Rust's shortest round-trip form so
//! every value parses back bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use memamp::protocol::ProtocolConfig;
use serde::Serialize;

use crate::config::config_echo;
use crate::error::CliError;

pub fn float(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

/// Comma-separated, LF-terminated, header first.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Records what produced a set of files. The timestamp lives only here, so
/// the data files themselves are reproducible.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Option<serde_json::Value>,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub timestamp: String,
    pub exit_code: u8,
    pub files: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&ProtocolConfig>, parameters: serde_json::Value) -> Self {
        Self {
            tool: "memamp",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: config.map(config_echo),
            parameters,
            seed: None,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            exit_code: 0,
            files: Vec::new(),
        }
    }

    /// Writes `manifest.json` into `dir` and returns its path.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        self.files.push(path.clone());
        write_json(&path, &self)?;
        Ok(path)
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create output dir {}: {e}", dir.display())))
}
