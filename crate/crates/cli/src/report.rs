//! CSV output with a metadata header.

use std::path::Path;

use crate::CliError;

/// Run settings written as `# key=value` lines ahead of every table.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        let mut m = Self { entries: Vec::new() };
        m.push("tool", format!("hgsim {}", env!("CARGO_PKG_VERSION")));
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.push(key, value);
        self
    }

    pub fn header(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
    }
}

/// A CSV table: header row plus string cells.
pub fn table(meta: &Metadata, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells");
    meta.header() + &body
}

/// Formats an optional number; missing values become an empty cell.
pub fn cell(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_precedes_rows() {
        let meta = Metadata::new("test").with("seed", 7);
        let text = table(&meta, &["a", "b"], &[vec!["1".into(), cell(None)]]);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# tool=hgsim "));
        assert_eq!(&lines[1..], ["# command=test", "# seed=7", "a,b", "1,"]);
    }
}
