use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

/// A finished command: the report body plus named certificate files.
pub struct Outcome {
    pub result: Value,
    pub certificates: Vec<(String, Value)>,
    /// Set when a certificate failed its independent re-check.
    pub verification_failure: Option<String>,
}

impl Outcome {
    pub fn new(result: impl Serialize) -> Result<Self, CliError> {
        Ok(Self { result: to_value(result)?, certificates: Vec::new(), verification_failure: None })
    }

    pub fn certificate(mut self, name: impl Into<String>, body: impl Serialize) -> Result<Self, CliError> {
        self.certificates.push((name.into(), to_value(body)?));
        Ok(self)
    }

    pub fn require(mut self, ok: bool, what: impl FnOnce() -> String) -> Self {
        if !ok && self.verification_failure.is_none() {
            self.verification_failure = Some(what());
        }
        self
    }
}

pub fn to_value(v: impl Serialize) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Internal(format!("serialization failed: {e}")))
}

/// Moves a `certificates` array out of a report body into named files.
pub fn split_certificates(body: &mut Value, name_key: &str) -> Vec<(String, Value)> {
    let Some(Value::Array(items)) = body.as_object_mut().and_then(|o| o.remove("certificates")) else {
        return Vec::new();
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let name = c.get(name_key).and_then(Value::as_str).map_or_else(|| format!("certificate-{i:04}"), str::to_string);
            (name, c)
        })
        .collect()
}

pub fn envelope(command: &str, config: &Value, outcome: &Outcome) -> Value {
    let refs: Vec<&str> = outcome.certificates.iter().map(|(n, _)| n.as_str()).collect();
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "result": outcome.result,
        "certificates": refs,
    })
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values always serialize");
    s.push('\n');
    s
}

pub fn write_dir(dir: &Path, report: &Value, outcome: &Outcome) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Invalid(format!("cannot write to {}: {e}", dir.display()));
    let certs = dir.join("certificates");
    fs::create_dir_all(&certs).map_err(io)?;
    fs::write(dir.join("report.json"), pretty(report)).map_err(io)?;
    for (name, body) in &outcome.certificates {
        fs::write(certs.join(format!("{name}.json")), pretty(body)).map_err(io)?;
    }
    // wall-clock data stays out of the report so reruns are byte-identical
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    fs::write(dir.join("meta.json"), pretty(&json!({ "finished_unix": secs }))).map_err(io)?;
    Ok(())
}
