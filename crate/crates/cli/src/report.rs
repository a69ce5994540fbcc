use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csv::write_text;
use crate::CliError;

/// Outcome of one experiment: parameters, written files, summary numbers and
/// the pass/fail flags of the expected relations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub params: BTreeMap<String, f64>,
    pub files: Vec<String>,
    pub summary: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
}

impl ExperimentReport {
    pub fn new(id: impl Into<String>) -> Self {
        ExperimentReport {
            id: id.into(),
            params: BTreeMap::new(),
            files: Vec::new(),
            summary: BTreeMap::new(),
            flags: BTreeMap::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: f64) {
        self.params.insert(key.to_string(), value);
    }

    pub fn summary(&mut self, key: &str, value: f64) {
        self.summary.insert(key.to_string(), value);
    }

    pub fn flag(&mut self, key: &str, ok: bool) {
        self.flags.insert(key.to_string(), ok);
    }

    pub fn file(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn failed(&self) -> Vec<String> {
        self.flags
            .iter()
            .filter(|(_, ok)| !**ok)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.flags.values().all(|ok| *ok)
    }

    /// Writes `report.json` into `dir`.
    pub fn write_json(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(self).expect("report is plain data");
        text.push('\n');
        write_text(&path, &text)
    }
}

impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.id)?;
        for (k, v) in &self.summary {
            writeln!(f, "  {k} = {v:.10e}")?;
        }
        for (k, ok) in &self.flags {
            writeln!(f, "  [{}] {k}", if *ok { "pass" } else { "FAIL" })?;
        }
        for name in &self.files {
            writeln!(f, "  wrote {name}")?;
        }
        Ok(())
    }
}
