//! Interchange formats: dense CSV matrices (row-major, no header) and
//! JSON partitions (bare arrays of group indices). Floats are written in
//! shortest round-trip form.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::Partition;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), message: message.into() }
}

pub fn write_matrix_csv(path: &Path, m: &ArrayView2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::new();
    for row in m.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v}"));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let content = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|tok| tok.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 1)))?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    path,
                    format!("line {}: expected {} fields, got {}", lineno + 1, first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, "empty matrix"));
    }
    let n = rows.len();
    let cols = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, cols), flat)
        .map_err(|e| parse_err(path, format!("shape error: {e}")))
}

/// One value per line.
pub fn write_vector_csv(path: &Path, v: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for x in v {
        writeln!(w, "{x}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let content = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|e| parse_err(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn write_partition_json(path: &Path, partition: &Partition) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    serde_json::to_writer(BufWriter::new(file), partition)
        .map_err(|e| parse_err(path, e.to_string()))
}

pub fn read_partition_json(path: &Path) -> Result<Partition> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| parse_err(path, e.to_string()))
}
