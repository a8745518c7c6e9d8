//! Minimal CSV helpers for the fixed-schema numeric artifacts.
//!
//! All writers emit floats with 17 significant digits so that a value survives
//! a write/read round trip bit-exactly and reruns with identical seeds produce
//! byte-identical files. Lines starting with `#` are metadata comments
//! (config hash, seed) and are skipped by the readers; the first non-comment
//! line is the column header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Shortest-exact float formatting would not be column-stable, so artifacts
/// use scientific notation with 16 fractional digits (17 significant).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a numeric CSV: optional `# key=value` comment lines, one header
/// line, then one row per record. `columns` supplies the rows column-major.
pub fn write_columns(
    path: &Path,
    comments: &[String],
    header: &str,
    columns: &[&[f64]],
) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("csv columns differ in length"));
    }
    if header.split(',').count() != columns.len() {
        return Err(Error::invalid("csv header/column count mismatch"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{header}")?;
    let mut line = String::with_capacity(columns.len() * 24);
    for i in 0..n {
        line.clear();
        for (k, col) in columns.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&fmt_f64(col[i]));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV written by [`write_columns`]. Verifies the header
/// matches `expected_header` exactly and returns the columns.
pub fn read_columns(path: &Path, expected_header: &str) -> Result<Vec<Vec<f64>>> {
    let file = BufReader::new(File::open(path)?);
    let path_str = path.display().to_string();
    let ncols = expected_header.split(',').count();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); ncols];
    let mut saw_header = false;
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line.trim() != expected_header {
                return Err(Error::Parse {
                    path: path_str,
                    line: lineno,
                    message: format!("expected header `{expected_header}`, got `{line}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let mut k = 0;
        for field in line.split(',') {
            if k >= ncols {
                break;
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                line: lineno,
                message: format!("bad float `{field}`"),
            })?;
            columns[k].push(v);
            k += 1;
        }
        if k != ncols {
            return Err(Error::Parse {
                path: path_str,
                line: lineno,
                message: format!("expected {ncols} fields, got {k}"),
            });
        }
    }
    if !saw_header {
        return Err(Error::Parse {
            path: path_str,
            line: 0,
            message: "missing header".into(),
        });
    }
    Ok(columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let a = vec![1.0, -2.5e-17, std::f64::consts::PI, 1e300];
        let b = vec![0.1, 0.2, 0.3, -0.4];
        write_columns(
            &path,
            &["seed=7".into()],
            "a,b",
            &[a.as_slice(), b.as_slice()],
        )
        .unwrap();
        let cols = read_columns(&path, "a,b").unwrap();
        assert_eq!(cols[0], a);
        assert_eq!(cols[1], b);
    }

    #[test]
    fn header_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_columns(&path, &[], "a,b", &[&[1.0], &[2.0]]).unwrap();
        let err = read_columns(&path, "a,c").unwrap_err();
        assert!(err.to_string().contains("expected header"));
    }

    #[test]
    fn rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "a,b\n1.0\n").unwrap();
        assert!(read_columns(&path, "a,b").is_err());
    }
}
