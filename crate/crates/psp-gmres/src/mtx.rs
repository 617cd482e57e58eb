//! Matrix Market coordinate-format reader and writer.
//!
//! Supports `matrix coordinate real general` and
//! `matrix coordinate real symmetric` with 1-based indices; duplicate
//! entries are summed. Complex, pattern and array variants are rejected.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::Error;
use crate::linalg::CsrMatrix;

pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix, Error> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (line_no, header) = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break (i + 1, line);
                }
            }
            None => {
                return Err(Error::Parse {
                    line: 0,
                    msg: "empty file".into(),
                })
            }
        }
    };

    let fields: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" {
        return Err(Error::Parse {
            line: line_no,
            msg: "header must start with %%MatrixMarket and have 5 fields".into(),
        });
    }
    if fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(Error::Unsupported(format!(
            "only 'matrix coordinate' is supported, got '{} {}'",
            fields[1], fields[2]
        )));
    }
    match fields[3].as_str() {
        "real" | "integer" => {}
        other => {
            return Err(Error::Unsupported(format!(
                "unsupported value type '{other}' (only real/integer)"
            )))
        }
    }
    let symmetric = match fields[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(Error::Unsupported(format!(
                "unsupported symmetry '{other}' (only general/symmetric)"
            )))
        }
    };

    // size line: first non-comment, non-blank line
    let (size_line_no, size_line) = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line?;
                let t = line.trim();
                if !t.is_empty() && !t.starts_with('%') {
                    break (i + 1, line);
                }
            }
            None => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "missing size line".into(),
                })
            }
        }
    };
    let dims: Vec<&str> = size_line.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(Error::Parse {
            line: size_line_no,
            msg: "size line must be 'rows cols nnz'".into(),
        });
    }
    let parse_usize = |s: &str, line: usize| {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid integer '{s}'"),
        })
    };
    let n_rows = parse_usize(dims[0], size_line_no)?;
    let n_cols = parse_usize(dims[1], size_line_no)?;
    let nnz = parse_usize(dims[2], size_line_no)?;

    let mut triplets = Vec::with_capacity(nnz);
    let mut seen = 0usize;
    for (i, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                msg: "entry line must be 'row col value'".into(),
            });
        }
        let r = parse_usize(parts[0], i + 1)?;
        let c = parse_usize(parts[1], i + 1)?;
        let v: f64 = parts[2].parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("invalid value '{}'", parts[2]),
        })?;
        if r == 0 || c == 0 || r > n_rows || c > n_cols {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("index ({r}, {c}) outside 1..={n_rows} x 1..={n_cols}"),
            });
        }
        triplets.push((r - 1, c - 1, v));
        if symmetric && r != c {
            triplets.push((c - 1, r - 1, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(Error::Parse {
            line: size_line_no,
            msg: format!("expected {nnz} entries, found {seen}"),
        });
    }
    CsrMatrix::from_triplets(n_rows, n_cols, &triplets)
}

/// Write in `matrix coordinate real general` form with 1-based indices.
/// Values use Rust's shortest round-trip float formatting, so a
/// read-back reproduces every entry exactly.
pub fn write_matrix_market(path: &Path, a: &CsrMatrix) -> Result<(), Error> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.n_rows, a.n_cols, a.nnz())?;
    for (i, j, v) in a.iter_entries() {
        writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
    }
    Ok(())
}
