use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rounds a float to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// Rounds every non-integer number in `v` to 12 significant digits.
pub fn normalize(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => {
            let x = round12(n.as_f64().expect("float"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(normalize).collect()),
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, normalize(v))).collect())
        }
        other => other,
    }
}

/// Resolved run configuration, echoed to stderr and hashed into outputs.
pub struct RunConfig {
    value: Value,
    hash: String,
}

impl RunConfig {
    pub fn new(value: Value) -> Self {
        let value = normalize(value);
        let text = serde_json::to_string(&value).expect("config serializes");
        let hash = Sha256::digest(text.as_bytes())
            .iter()
            .fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            });
        Self { value, hash }
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn announce(&self) {
        eprintln!("config: {}", self.value);
        eprintln!("config_hash: {}", self.hash);
    }

    /// Pretty JSON with `config_hash` and `version` added.
    pub fn json(&self, body: Value) -> String {
        let mut map = match normalize(body) {
            Value::Object(map) => map,
            other => {
                let mut map = Map::new();
                map.insert("result".into(), other);
                map
            }
        };
        map.insert("config_hash".into(), Value::String(self.hash.clone()));
        map.insert("version".into(), Value::String(VERSION.into()));
        let mut text = serde_json::to_string_pretty(&Value::Object(map)).expect("json serializes");
        text.push('\n');
        text
    }

    /// CSV text with `#` provenance comments ahead of the header row.
    pub fn csv(&self, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
        let mut out = format!("# mqms {VERSION}\n# config_hash {}\n", self.hash);
        out.push_str(&header.join(","));
        out.push('\n');
        for row in rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Formats a CSV number cell.
pub fn cell(x: f64) -> String {
    round12(x).to_string()
}

pub fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::Internal(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
