//! Minimal CSV output with a provenance comment line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::CliError;

pub enum Cell<'a> {
    F(f64),
    I(u64),
    S(&'a str),
}

impl std::fmt::Display for Cell<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            // 17 significant digits round-trip every f64; -0 prints as 0
            Cell::F(v) => write!(f, "{:.16e}", v + 0.0),
            Cell::I(v) => write!(f, "{v}"),
            Cell::S(s) => f.write_str(s),
        }
    }
}

pub struct CsvWriter {
    out: BufWriter<File>,
    columns: usize,
    path: String,
}

impl CsvWriter {
    /// Creates `dir/name` and writes `# svi <version> config_sha256=<hash>`
    /// followed by the header row.
    pub fn create(dir: &Path, name: &str, hash: &str, header: &[&str]) -> Result<Self, CliError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        let mut w = CsvWriter { out: BufWriter::new(file), columns: header.len(), path: path.display().to_string() };
        w.line(&format!("# svi {} config_sha256={hash}", env!("CARGO_PKG_VERSION")))?;
        w.line(&header.join(","))?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<(), CliError> {
        writeln!(self.out, "{s}").map_err(|e| CliError::Io(format!("write to {} failed: {e}", self.path)))
    }

    pub fn row(&mut self, cells: &[Cell]) -> Result<(), CliError> {
        debug_assert_eq!(cells.len(), self.columns);
        let s: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
        self.line(&s.join(","))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out.flush().map_err(|e| CliError::Io(format!("write to {} failed: {e}", self.path)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_17_digits() {
        assert_eq!(Cell::F(0.1).to_string(), "1.0000000000000001e-1");
        assert_eq!(Cell::F(-2.0).to_string(), "-2.0000000000000000e0");
        assert_eq!(Cell::F(-0.0).to_string(), "0.0000000000000000e0");
        let v: f64 = Cell::F(std::f64::consts::PI).to_string().parse().unwrap();
        assert_eq!(v, std::f64::consts::PI);
    }

    #[test]
    fn header_and_comment() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = CsvWriter::create(dir.path(), "a.csv", "abc", &["x", "name"]).unwrap();
        w.row(&[Cell::I(3), Cell::S("ok")]).unwrap();
        w.finish().unwrap();
        let text = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# svi ") && lines[0].ends_with("config_sha256=abc"));
        assert_eq!(lines[1], "x,name");
        assert_eq!(lines[2], "3,ok");
    }
}
