//! Run manifests written next to every command's outputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub otprox_version: String,
    pub cli_version: String,
    pub parallel: bool,
    pub threads: usize,
    pub seed: Option<u64>,
    pub config: BTreeMap<String, Value>,
    pub phases: Vec<Phase>,
    pub outputs: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, Value>,
    #[serde(skip)]
    clock: Option<(String, Instant)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            otprox_version: otprox::VERSION.to_string(),
            cli_version: env!("CARGO_PKG_VERSION").to_string(),
            parallel: otprox::par::is_parallel(),
            threads: otprox::par::current_num_threads(),
            seed: None,
            config: BTreeMap::new(),
            phases: Vec::new(),
            outputs: BTreeMap::new(),
            metrics: BTreeMap::new(),
            clock: None,
        }
    }

    pub fn config(&mut self, key: &str, value: impl Serialize) {
        self.config.insert(key.to_string(), to_value(value));
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics.insert(key.to_string(), to_value(value));
    }

    pub fn output(&mut self, key: &str, path: &Path) {
        self.outputs.insert(key.to_string(), path.display().to_string());
    }

    /// Closes the running phase, if any, and starts timing `name`.
    pub fn phase(&mut self, name: &str) {
        self.end_phase();
        self.clock = Some((name.to_string(), Instant::now()));
    }

    pub fn end_phase(&mut self) {
        if let Some((name, start)) = self.clock.take() {
            self.phases.push(Phase {
                name,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }

    pub fn write(mut self, path: &Path) -> Result<(), CliError> {
        self.end_phase();
        self.outputs
            .insert("manifest".into(), path.display().to_string());
        let text = serde_json::to_string_pretty(&self)
            .map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))?;
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}

/// JSON value with non-finite floats mapped to null.
fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}
