//! CSV tables and run outcomes.
//!
//! Every table starts with a `# gibbslab <name> schema=1` comment line and a
//! column header. Floats are written as `{:.12e}` so identical runs give
//! identical bytes.

use std::path::{Path, PathBuf};

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

pub fn num(v: f64) -> String {
    format!("{v:.12e}")
}

/// Space-separated coordinates.
pub fn join(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    name: String,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self::new_owned(name, columns.iter().map(|c| c.to_string()).collect())
    }

    pub fn new_owned(name: &str, columns: Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    /// Panics if the row width differs from the header.
    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.columns.len(), "row width mismatch in table {}", self.name);
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = format!("# gibbslab {} schema={SCHEMA_VERSION}\n", self.name).into_bytes();
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
            w.write_record(&self.columns).expect("writing to memory");
            for r in &self.rows {
                w.write_record(r).expect("writing to memory");
            }
            w.flush().expect("writing to memory");
        }
        String::from_utf8(out).expect("cells are UTF-8")
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Files written by a run and whether some initial conditions or rows failed.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub partial: bool,
    pub summary: serde_json::Value,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_has_schema_line_and_quotes() {
        let mut t = CsvTable::new("demo", &["a", "b"]);
        t.row(vec![num(0.5), "x,y".into()]);
        let s = t.render();
        assert_eq!(s, "# gibbslab demo schema=1\na,b\n5.000000000000e-1,\"x,y\"\n");
    }

    #[test]
    #[should_panic]
    fn row_width_checked() {
        let mut t = CsvTable::new("demo", &["a", "b"]);
        t.row(vec!["1".into()]);
    }
}
