//! Plain-text matrix, vector and trace formats.
//!
//! Matrices are read from MatrixMarket (`coordinate` or `array`) or from
//! headerless CSV. Vectors are one value per line. Floats are written in the
//! shortest form that parses back to the same bits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::driver::SolverTrace;
use crate::error::{Error, Result};

/// Shortest round-trip text for `v`, switching to exponent form for very
/// large or small magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.trim().parse::<f64>().map_err(|_| parse_err(line, format!("not a number: '{}'", tok.trim())))
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>().map_err(|_| parse_err(line, format!("not an index: '{tok}'")))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_matrix(&text)
}

/// MatrixMarket if the first line carries the banner, CSV otherwise.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    if text.trim_start().starts_with("%%MatrixMarket") {
        parse_matrix_market(text)
    } else {
        parse_csv(text)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

pub fn parse_matrix_market(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, banner) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let fields: Vec<String> = banner.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(1, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    let coordinate = match fields[2].as_str() {
        "coordinate" => true,
        "array" => false,
        f => return Err(parse_err(1, format!("unsupported format '{f}'"))),
    };
    let pattern = match fields[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        f => return Err(parse_err(1, format!("unsupported field '{f}'"))),
    };
    let sym = match fields[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        s => return Err(parse_err(1, format!("unsupported symmetry '{s}'"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body.next().ok_or_else(|| parse_err(1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| parse_usize(t, size_line))
        .collect::<Result<_>>()?;
    let expected = if coordinate { 3 } else { 2 };
    if dims.len() != expected {
        return Err(parse_err(size_line, format!("size line needs {expected} integers")));
    }
    let (m, n) = (dims[0], dims[1]);
    if sym != Symmetry::General && m != n {
        return Err(parse_err(size_line, "symmetric storage needs a square matrix"));
    }
    let mut mat = DMatrix::zeros(m, n);
    let mut put = |i: usize, j: usize, v: f64| {
        mat[(i, j)] = v;
        if i != j {
            match sym {
                Symmetry::General => {}
                Symmetry::Symmetric => mat[(j, i)] = v,
                Symmetry::Skew => mat[(j, i)] = -v,
            }
        }
    };

    if coordinate {
        let nnz = dims[2];
        let mut seen = 0;
        for (ln, line) in body {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let need = if pattern { 2 } else { 3 };
            if toks.len() < need {
                return Err(parse_err(ln, format!("expected {need} fields")));
            }
            let i = parse_usize(toks[0], ln)?;
            let j = parse_usize(toks[1], ln)?;
            if i == 0 || j == 0 || i > m || j > n {
                return Err(parse_err(ln, format!("index ({i}, {j}) out of range")));
            }
            let v = if pattern { 1.0 } else { parse_f64(toks[2], ln)? };
            put(i - 1, j - 1, v);
            seen += 1;
        }
        if seen != nnz {
            return Err(parse_err(size_line, format!("declared {nnz} entries, found {seen}")));
        }
    } else {
        // column-major; symmetric storage lists the lower triangle only
        let mut slots = Vec::new();
        for j in 0..n {
            let start = match sym {
                Symmetry::General => 0,
                Symmetry::Symmetric => j,
                Symmetry::Skew => j + 1,
            };
            for i in start..m {
                slots.push((i, j));
            }
        }
        let mut values = Vec::with_capacity(slots.len());
        let mut last = size_line;
        for (ln, line) in body {
            for tok in line.split_whitespace() {
                values.push(parse_f64(tok, ln)?);
            }
            last = ln;
        }
        if values.len() != slots.len() {
            return Err(parse_err(last, format!("expected {} values, found {}", slots.len(), values.len())));
        }
        for ((i, j), v) in slots.into_iter().zip(values) {
            put(i, j, v);
        }
    }
    Ok(mat)
}

/// Headerless CSV: one matrix row per line.
pub fn parse_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let row = t.split(',').map(|tok| parse_f64(tok, i + 1)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(i + 1, format!("expected {} columns, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    let (m, n) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

pub fn write_matrix_market(path: impl AsRef<Path>, mat: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_market_to(&mut w, mat)?;
    w.flush()?;
    Ok(())
}

pub fn write_matrix_market_to(w: &mut impl Write, mat: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", mat.nrows(), mat.ncols())?;
    for v in mat.iter() {
        writeln!(w, "{}", fmt_f64(*v))?;
    }
    Ok(())
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_vector(&text)
}

/// One value per line; blank lines and `#`/`%` comments skipped. A
/// MatrixMarket single-column matrix is accepted too.
pub fn parse_vector(text: &str) -> Result<DVector<f64>> {
    if text.trim_start().starts_with("%%MatrixMarket") {
        let m = parse_matrix_market(text)?;
        if m.ncols() != 1 {
            return Err(parse_err(1, format!("expected one column, found {}", m.ncols())));
        }
        return Ok(m.column(0).into_owned());
    }
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        values.push(parse_f64(t, i + 1)?);
    }
    Ok(DVector::from_vec(values))
}

pub fn write_vector(path: impl AsRef<Path>, v: &DVector<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vector_to(&mut w, v)?;
    w.flush()?;
    Ok(())
}

pub fn write_vector_to(w: &mut impl Write, v: &DVector<f64>) -> Result<()> {
    for x in v.iter() {
        writeln!(w, "{}", fmt_f64(*x))?;
    }
    Ok(())
}

pub const TRACE_HEADER: &str = "t,objective,change_norm,block_size,seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub objective: f64,
    pub change_norm: f64,
    pub block_size: usize,
    pub seconds: f64,
}

pub fn write_trace(path: impl AsRef<Path>, trace: &SolverTrace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trace_to(&mut w, trace)?;
    w.flush()?;
    Ok(())
}

pub fn write_trace_to(w: &mut impl Write, trace: &SolverTrace) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.t,
            fmt_f64(r.objective),
            fmt_f64(r.change_norm),
            r.block_size,
            fmt_f64(r.seconds)
        )?;
    }
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    read_trace_from(BufReader::new(File::open(path)?))
}

pub fn read_trace_from(r: impl BufRead) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let ln = i + 1;
        if ln == 1 {
            if line.trim() != TRACE_HEADER {
                return Err(parse_err(1, format!("expected header '{TRACE_HEADER}'")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(parse_err(ln, format!("expected 5 fields, found {}", f.len())));
        }
        rows.push(TraceRow {
            t: parse_usize(f[0].trim(), ln)?,
            objective: parse_f64(f[1], ln)?,
            change_norm: parse_f64(f[2], ln)?,
            block_size: parse_usize(f[3].trim(), ln)?,
            seconds: parse_f64(f[4], ln)?,
        });
    }
    Ok(rows)
}
