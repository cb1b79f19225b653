//! `report.json` layout.

use std::collections::BTreeMap;
use std::path::Path;

use restoration_core::Report;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::LabError;

/// Key holding the wall-clock stamp; the only nondeterministic field.
pub const TIMESTAMP_KEY: &str = "generated_at";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub package: String,
    pub version: String,
    /// SHA-256 of the canonical resolved-settings JSON, scenario name and seed.
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(scenario: &str, seed: u64, settings: &Value) -> Self {
        let mut h = Sha256::new();
        h.update(scenario.as_bytes());
        h.update(seed.to_le_bytes());
        h.update(settings.to_string().as_bytes());
        Self {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: hex::encode(h.finalize()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorEntry {
    pub label: String,
    pub description: String,
    pub metrics: Report,
    /// `√R̃`, alongside the squared-units `metrics.robustness_practical`.
    pub robustness_sqrt: f64,
    /// Which attack objective the robustness numbers use.
    pub robustness_objective: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub provenance: Provenance,
    pub generated_at: String,
    pub config: Value,
    pub estimators: Vec<EstimatorEntry>,
    pub checks: BTreeMap<String, Value>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn estimator(&self, label: &str) -> Option<&EstimatorEntry> {
        self.estimators.iter().find(|e| e.label == label)
    }

    pub fn metrics(&self, label: &str) -> Option<&Report> {
        self.estimator(label).map(|e| &e.metrics)
    }

    pub fn check_bool(&self, key: &str) -> Option<bool> {
        self.checks.get(key).and_then(Value::as_bool)
    }

    pub fn check_f64(&self, key: &str) -> Option<f64> {
        self.checks.get(key).and_then(Value::as_f64)
    }

    pub fn to_json(&self) -> Result<String, LabError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<(), LabError> {
        std::fs::write(path, self.to_json()?).map_err(|source| LabError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Report text with the timestamp line removed, for determinism comparisons.
pub fn strip_timestamp(json: &str) -> String {
    let needle = format!("\"{TIMESTAMP_KEY}\":");
    json.lines()
        .filter(|l| !l.trim_start().starts_with(&needle))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
