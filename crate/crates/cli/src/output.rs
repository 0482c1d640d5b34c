use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::args::{Command, Format};

/// Everything needed to re-run an experiment; echoed into every output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: String,
    pub format: Format,
    pub command: Command,
}

pub const CONFIG_PREFIX: &str = "# config: ";
const SUMMARY_PREFIX: &str = "# summary: ";

#[derive(Debug, Default)]
pub struct Results {
    pub rows: Vec<Map<String, Value>>,
    pub summary: Option<Map<String, Value>>,
}

impl Results {
    pub fn from_rows<T: Serialize>(rows: &[T]) -> serde_json::Result<Self> {
        Ok(Self {
            rows: rows.iter().map(to_map).collect::<serde_json::Result<_>>()?,
            summary: None,
        })
    }

    pub fn with_summary<T: Serialize>(mut self, summary: &T) -> serde_json::Result<Self> {
        self.summary = Some(to_map(summary)?);
        Ok(self)
    }
}

fn to_map<T: Serialize>(v: &T) -> serde_json::Result<Map<String, Value>> {
    match serde_json::to_value(v)? {
        Value::Object(m) => Ok(m),
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            Ok(m)
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(cell).collect::<Vec<_>>().join(";"),
        other => other.to_string(),
    }
}

pub fn render(config: &ExperimentConfig, results: &Results) -> Result<String, Box<dyn std::error::Error>> {
    match config.format {
        Format::Json => {
            let mut body = Map::new();
            body.insert("rows".into(), Value::Array(results.rows.iter().cloned().map(Value::Object).collect()));
            if let Some(s) = &results.summary {
                body.insert("summary".into(), Value::Object(s.clone()));
            }
            let doc = serde_json::json!({ "config": config, "results": body });
            Ok(serde_json::to_string_pretty(&doc)? + "\n")
        }
        Format::Csv => {
            let mut out = format!("# hypcyl {}\n{CONFIG_PREFIX}{}\n", config.command.name(), serde_json::to_string(config)?);
            if let Some(s) = &results.summary {
                out.push_str(&format!("{SUMMARY_PREFIX}{}\n", serde_json::to_string(s)?));
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            if let Some(first) = results.rows.first() {
                w.write_record(first.keys())?;
                for row in &results.rows {
                    w.write_record(row.values().map(cell))?;
                }
            }
            out.push_str(&String::from_utf8(w.into_inner()?)?);
            Ok(out)
        }
    }
}

/// Reads the embedded config back from CSV or JSON output.
pub fn read_config(text: &str) -> Result<ExperimentConfig, String> {
    if text.trim_start().starts_with('{') {
        let doc: Value = serde_json::from_str(text).map_err(|e| format!("not valid JSON: {e}"))?;
        let cfg = doc.get("config").ok_or("JSON output has no `config`")?;
        return serde_json::from_value(cfg.clone()).map_err(|e| format!("bad config: {e}"));
    }
    let line = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix(CONFIG_PREFIX))
        .ok_or("no config header line")?;
    serde_json::from_str(line).map_err(|e| format!("bad config: {e}"))
}
