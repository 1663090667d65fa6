use std::collections::BTreeMap;
use std::path::Path;

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct Output {
    pub name: String,
    pub path: String,
    pub checksum: String,
}

/// Metrics keep full `f64` bits; non-finite values serialize as strings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metric(pub f64);

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0.is_nan() {
            s.serialize_str("nan")
        } else if self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub seed: u64,
    pub artifact_version: String,
    pub outputs: Vec<Output>,
    pub metrics: BTreeMap<String, Metric>,
    pub wall_time_s: f64,
}

impl ExperimentReport {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            parameters: BTreeMap::new(),
            seed,
            artifact_version: ARTIFACT_VERSION.to_string(),
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.parameters.insert(key.to_string(), value.to_string());
        self
    }

    pub fn metric(&mut self, key: &str, value: f64) -> &mut Self {
        self.metrics.insert(key.to_string(), Metric(value));
        self
    }

    /// Records a file written by the command with its SHA-256.
    pub fn output(&mut self, name: &str, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        self.outputs.push(Output {
            name: name.to_string(),
            path: path.display().to_string(),
            checksum: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
