use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use d2dlab::numeric::round_significant;

use crate::error::{CliError, Result};

/// Number formatting shared by every data file.
#[derive(Debug, Clone, Copy)]
pub struct Precision(pub usize);

impl Precision {
    pub fn json(&self, x: f64) -> Value {
        if x.is_finite() {
            serde_json::Number::from_f64(round_significant(x, self.0))
                .map(Value::Number)
                .unwrap_or(Value::Null)
        } else {
            Value::Null
        }
    }

    /// CSV cell; non-finite values become empty cells.
    pub fn cell(&self, x: f64) -> String {
        if x.is_finite() {
            format!("{}", round_significant(x, self.0))
        } else {
            String::new()
        }
    }

    pub fn opt_cell(&self, x: Option<f64>) -> String {
        x.map(|v| self.cell(v)).unwrap_or_default()
    }
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let emit = |w: &mut csv::Writer<Vec<u8>>, rec: &[String]| {
        w.write_record(rec).map_err(|e| CliError::Internal(e.to_string()))
    };
    emit(&mut w, &header.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
    for r in rows {
        emit(&mut w, r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(path, &bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// `<output>.manifest.json` next to the data file.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Debug, Serialize)]
pub struct Timestamps {
    pub start_unix: f64,
    pub end_unix: f64,
}

/// Provenance record written beside every output file. Only the manifest
/// carries timestamps, so data files stay byte-identical across reruns.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, Value>,
    pub seed: Option<u64>,
    pub versions: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub timestamps: Timestamps,
}

pub struct ManifestBuilder {
    command: String,
    parameters: BTreeMap<String, Value>,
    seed: Option<u64>,
    start: f64,
}

impl ManifestBuilder {
    pub fn new<P: Serialize>(command: &str, params: &P, seed: Option<u64>) -> Result<Self> {
        let parameters = match serde_json::to_value(params) {
            Ok(Value::Object(map)) => map.into_iter().collect(),
            Ok(other) => BTreeMap::from([("value".to_string(), other)]),
            Err(e) => return Err(CliError::Internal(e.to_string())),
        };
        Ok(Self {
            command: command.to_string(),
            parameters,
            seed,
            start: unix_seconds(),
        })
    }

    /// Writes the manifest next to the first output.
    pub fn finish(self, outputs: &[&Path]) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            parameters: self.parameters,
            seed: self.seed,
            versions: BTreeMap::from([
                ("d2dlab".to_string(), d2dlab_version()),
                ("d2dlab-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ]),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            timestamps: Timestamps {
                start_unix: self.start,
                end_unix: unix_seconds(),
            },
        };
        let value = serde_json::to_value(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        write_json(&manifest_path(outputs[0]), &value)
    }
}

fn d2dlab_version() -> String {
    // The library shares the workspace version.
    env!("CARGO_PKG_VERSION").to_string()
}
