use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::CliError;

/// Column table with `# key=value` metadata lines first.
pub(crate) struct Table<'a> {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<(&'a str, &'a [f64])>,
}

impl<'a> Table<'a> {
    pub fn new() -> Self {
        Table {
            meta: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn column(mut self, name: &'a str, values: &'a [f64]) -> Self {
        self.columns.push((name, values));
        self
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let rows = self.columns.first().map_or(0, |c| c.1.len());
        assert!(self.columns.iter().all(|c| c.1.len() == rows), "ragged table");
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
            for (k, v) in &self.meta {
                writeln!(out, "# {k}={v}")?;
            }
            let names: Vec<&str> = self.columns.iter().map(|c| c.0).collect();
            writeln!(out, "{}", names.join(","))?;
            for i in 0..rows {
                let row: Vec<String> = self.columns.iter().map(|c| format!("{:.16e}", c.1[i])).collect();
                writeln!(out, "{}", row.join(","))?;
            }
            out.flush()
        };
        write(&mut out).map_err(|e| CliError::io(path, e))
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
