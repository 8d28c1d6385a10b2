//! Analysis report and its two serializations.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantity {
    pub value: f64,
    /// One standard deviation; absent for quantities without an error model.
    pub uncertainty: Option<f64>,
    pub unit: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub tool_version: String,
    pub input_digest: String,
    pub subcommand: String,
    pub parameters: BTreeMap<String, Quantity>,
    pub warnings: Vec<String>,
    pub flags: BTreeMap<String, bool>,
    /// Settings the analysis ran with, after defaults were applied.
    pub settings: BTreeMap<String, f64>,
    /// Array-valued results, such as a correlation histogram.
    pub series: BTreeMap<String, Vec<f64>>,
}

impl AnalysisReport {
    pub fn new(subcommand: impl Into<String>, input_digest: String) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_owned(),
            input_digest,
            subcommand: subcommand.into(),
            parameters: BTreeMap::new(),
            warnings: Vec::new(),
            flags: BTreeMap::new(),
            settings: BTreeMap::new(),
            series: BTreeMap::new(),
        }
    }

    pub fn param(&mut self, name: impl Into<String>, value: f64, uncertainty: f64, unit: &'static str) {
        self.parameters.insert(name.into(), Quantity { value, uncertainty: Some(uncertainty), unit });
    }

    pub fn value(&mut self, name: impl Into<String>, value: f64, unit: &'static str) {
        self.parameters.insert(name.into(), Quantity { value, uncertainty: None, unit });
    }

    pub fn flag(&mut self, name: impl Into<String>, set: bool) {
        self.flags.insert(name.into(), set);
    }

    pub fn setting(&mut self, name: impl Into<String>, value: f64) {
        self.settings.insert(name.into(), value);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    /// Key-sorted, pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        // `serde_json::Map` is ordered by key, so the round trip through
        // `Value` sorts every level.
        let value = serde_json::to_value(self).expect("report is serializable");
        let mut out = serde_json::to_string_pretty(&value).expect("value is serializable");
        out.push('\n');
        out
    }

    /// One `dotted.key=value` line per leaf, sorted by key.
    pub fn to_key_value(&self) -> String {
        let value = serde_json::to_value(self).expect("report is serializable");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<String>) {
    let join = |key: &str| if prefix.is_empty() { key.to_owned() } else { format!("{prefix}.{key}") };
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&join(k), v, out);
            }
        }
        Value::Array(items) if items.iter().all(|v| !v.is_object() && !v.is_array()) => {
            let joined: Vec<String> = items.iter().map(scalar).collect();
            out.push(format!("{prefix}=[{}]", joined.join(",")));
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), v, out);
            }
        }
        other => out.push(format!("{prefix}={}", scalar(other))),
    }
}

fn scalar(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// SHA-256 over the inputs in order; each input is length-prefixed so
/// different splits of the same bytes hash differently.
pub fn digest(inputs: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for bytes in inputs {
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }
    hex::encode(hasher.finalize())
}
