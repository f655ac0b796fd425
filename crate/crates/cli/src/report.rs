use std::path::Path;

use serde_json::{Map, Value};

use crate::error::CliError;

/// Ordered `key=value` report, also writable as a JSON object.
#[derive(Debug, Default)]
pub struct Report {
    entries: Vec<(String, Value)>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Self::default();
        r.put("command", command);
        r
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        self.entries.push((key.into(), value.into()));
    }

    /// Appends the `key=value` lines of a library summary.
    pub fn put_lines(&mut self, text: &str) {
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                let value = v
                    .parse::<i64>()
                    .map(Value::from)
                    .or_else(|_| v.parse::<f64>().map(Value::from))
                    .unwrap_or_else(|_| Value::from(v));
                self.put(k, value);
            }
        }
    }

    pub fn text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => format!("{k}={s}\n"),
                other => format!("{k}={other}\n"),
            })
            .collect()
    }

    pub fn write_json(&self, path: &Path) -> Result<(), CliError> {
        let map: Map<String, Value> = self.entries.iter().cloned().collect();
        let text =
            serde_json::to_string_pretty(&Value::Object(map)).expect("report values serialize");
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::Io(format!("cannot write report {}: {e}", path.display())))
    }
}
