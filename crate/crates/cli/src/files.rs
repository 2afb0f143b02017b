//! Reading inputs and writing artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Artifacts are staged fully in memory and then written one by one through
/// a temporary file in the output directory that is renamed into place.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<S: Serialize>(&mut self, name: &str, value: &S) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::input(format!("{name}: {e}")))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn add_csv<S: Serialize>(&mut self, name: &str, rows: &[S]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row).map_err(|e| CliError::input(format!("{name}: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::input(format!("{name}: {e}")))?;
        self.add(name, bytes);
        Ok(())
    }

    pub fn write_all(self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = dir.join(&name);
            write_atomic(&path, &bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Read a CSV whose header must match `header` exactly. Each row comes back
/// with its 1-based line number for later diagnostics.
pub fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> CliResult<Vec<(u64, T)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let found = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(CliError::input(format!(
            "{} line 1: expected header '{}', found '{}'",
            path.display(),
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                record.trim();
                let row = record
                    .deserialize(Some(&found))
                    .map_err(|e| CliError::input(format!("{} line {line}: {e}", path.display())))?;
                rows.push((line, row));
            }
            Err(e) => return Err(csv_error(path, e)),
        }
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.position() {
        Some(pos) => CliError::input(format!("{} line {}: {e}", path.display(), pos.line())),
        None => CliError::input(format!("{}: {e}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, serde::Deserialize, PartialEq)]
    struct Row {
        a: u32,
        b: f64,
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "a,b\n1,2.5\n2,oops\n").unwrap();
        let err = read_csv::<Row>(&p, &["a", "b"]).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "a,c\n1,2\n").unwrap();
        assert!(read_csv::<Row>(&p, &["a", "b"]).unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn rows_round_trip_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "a,b\n1,2.5\n 3 , 4\n").unwrap();
        let rows = read_csv::<Row>(&p, &["a", "b"]).unwrap();
        assert_eq!(rows, vec![(2, Row { a: 1, b: 2.5 }), (3, Row { a: 3, b: 4.0 })]);
    }

    #[test]
    fn outputs_land_in_a_fresh_directory() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("nested/out");
        let mut out = Outputs::default();
        out.add("a.txt", b"hello".to_vec());
        out.write_all(&target).unwrap();
        assert_eq!(fs::read(target.join("a.txt")).unwrap(), b"hello");
        assert_eq!(fs::read_dir(&target).unwrap().count(), 1);
    }
}
