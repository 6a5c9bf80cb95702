use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Experiment;
use crate::error::{Error, Result};

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Experiment-specific settings; unknown keys are rejected when the
    /// experiment reads them.
    #[serde(default)]
    pub params: toml::Table,
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: 0,
            output_dir: default_output_dir(),
            params: toml::Table::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("<config>", e.message().to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        toml::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.message().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<config>", e.to_string()))
    }

    /// Config text without the output directory; the basis of the input hash.
    pub fn canonical_text(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.to_toml()
    }

    /// Applies one `key=value` override. `value` is read as a TOML value and
    /// falls back to a plain string. Keys other than `experiment`, `seed` and
    /// `output_dir` address `params`, optionally with a `params.` prefix and
    /// dotted nesting.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
        let key = key.trim();
        let value = parse_value(raw.trim());
        match key {
            "experiment" => {
                let name = value.as_str().ok_or_else(|| Error::config(key, "expected a string"))?;
                self.experiment = name.parse()?;
            }
            "seed" => {
                let seed = value
                    .as_integer()
                    .filter(|v| *v >= 0)
                    .ok_or_else(|| Error::config(key, "expected a non-negative integer"))?;
                self.seed = seed as u64;
            }
            "output_dir" => {
                let dir = value.as_str().ok_or_else(|| Error::config(key, "expected a string"))?;
                self.output_dir = PathBuf::from(dir);
            }
            _ => {
                let path = key.strip_prefix("params.").unwrap_or(key);
                let parts: Vec<&str> = path.split('.').collect();
                if parts.iter().any(|p| p.is_empty()) {
                    return Err(Error::config(key, "empty key segment"));
                }
                let mut table = &mut self.params;
                for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
                    let entry = table
                        .entry(part.to_string())
                        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                    table = entry.as_table_mut().ok_or_else(|| {
                        Error::config(format!("params.{}", parts[..=i].join(".")), "is not a table")
                    })?;
                }
                table.insert(parts[parts.len() - 1].to_string(), value);
            }
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
