//! CSV and binary formats for datasets and chain traces.
//!
//! * vectors: one value per row, optional header
//! * counts: `class_id,count` rows, one row per observation
//! * matrices: one CSV row per matrix row
//! * traces: `MYISTRC1`, `n: u64`, `d: u64`, then per draw `d` f64 values,
//!   the f64 log-weight and one accepted byte, all little-endian

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::{ChainTrace, TraceObserver};
use crate::scalar::Scalar;

pub const TRACE_MAGIC: &[u8; 8] = b"MYISTRC1";

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::File { path: path.to_path_buf(), source })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| Error::File { path: path.to_path_buf(), source })
}

fn format_error(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).from_reader(open(path)?))
}

/// Parses every record as numbers, skipping a leading header row.
fn numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(format_error(path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(rows)
}

pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let rows = numeric_rows(path)?;
    if rows.is_empty() {
        return Err(format_error(path, "no values"));
    }
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| match r.as_slice() {
            [v] => Ok(*v),
            _ => Err(format_error(path, format!("row {} has {} columns, expected 1", i + 1, r.len()))),
        })
        .collect()
}

pub fn write_vector_csv(path: impl AsRef<Path>, header: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path.as_ref())?);
    w.write_record([header])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Groups `class_id,count` rows by class, ordered by class id.
pub fn read_counts_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<u64>>> {
    let path = path.as_ref();
    let mut classes: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for (i, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let fields: Vec<&str> = rec.iter().collect();
        let parsed = match fields.as_slice() {
            [c, y] => c.parse::<u64>().and_then(|c| y.parse::<u64>().map(|y| (c, y))),
            _ => return Err(format_error(path, format!("line {}: expected class_id,count", i + 1))),
        };
        match parsed {
            Ok((c, y)) => classes.entry(c).or_default().push(y),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(format_error(path, format!("line {}: {e}", i + 1))),
        }
    }
    if classes.is_empty() {
        return Err(format_error(path, "no counts"));
    }
    Ok(classes.into_values().collect())
}

pub fn write_counts_csv(path: impl AsRef<Path>, counts: &[Vec<u64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path.as_ref())?);
    w.write_record(["class_id", "count"])?;
    for (c, ys) in counts.iter().enumerate() {
        for y in ys {
            w.write_record([c.to_string(), y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Row-major matrix stored one CSV row per matrix row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<MatrixData> {
    let path = path.as_ref();
    let rows = numeric_rows(path)?;
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 {
        return Err(format_error(path, "empty matrix"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(format_error(path, format!("row {} has {} columns, expected {cols}", i + 1, rows[i].len())));
    }
    Ok(MatrixData { rows: rows.len(), cols, values: rows.concat() })
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &MatrixData) -> Result<()> {
    if m.values.len() != m.rows * m.cols {
        return Err(Error::DimensionMismatch { expected: m.rows * m.cols, got: m.values.len() });
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path.as_ref())?);
    for r in m.values.chunks(m.cols.max(1)) {
        w.write_record(r.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    #[default]
    Binary,
    Csv,
}

impl TraceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Binary => "bin",
            Self::Csv => "csv",
        }
    }
}

enum Sink {
    Binary(BufWriter<File>),
    Csv(csv::Writer<File>),
}

/// Streams draws to disk as they are produced.
pub struct TraceWriter {
    path: PathBuf,
    sink: Sink,
    expected: usize,
    written: usize,
}

impl TraceWriter {
    pub fn create(path: impl AsRef<Path>, format: TraceFormat) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = create(&path)?;
        let sink = match format {
            TraceFormat::Binary => Sink::Binary(BufWriter::new(file)),
            TraceFormat::Csv => Sink::Csv(csv::Writer::from_writer(file)),
        };
        Ok(Self { path, sink, expected: 0, written: 0 })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Flushes buffered output; fails if fewer draws arrived than announced.
    pub fn finish(mut self) -> Result<()> {
        if self.written != self.expected {
            return Err(format_error(&self.path, format!("wrote {} of {} draws", self.written, self.expected)));
        }
        match &mut self.sink {
            Sink::Binary(w) => w.flush()?,
            Sink::Csv(w) => w.flush()?,
        }
        Ok(())
    }
}

impl<T: Scalar> TraceObserver<T> for TraceWriter {
    fn begin(&mut self, n: usize, dim: usize) -> Result<()> {
        self.expected = n;
        self.written = 0;
        match &mut self.sink {
            Sink::Binary(w) => {
                w.write_all(TRACE_MAGIC)?;
                w.write_all(&(n as u64).to_le_bytes())?;
                w.write_all(&(dim as u64).to_le_bytes())?;
            }
            Sink::Csv(w) => {
                let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
                header.push("log_weight".into());
                header.push("accepted".into());
                w.write_record(&header)?;
            }
        }
        Ok(())
    }

    fn record(&mut self, x: &[T], log_weight: T, accepted: bool) -> Result<()> {
        match &mut self.sink {
            Sink::Binary(w) => {
                for v in x {
                    w.write_all(&v.as_f64().to_le_bytes())?;
                }
                w.write_all(&log_weight.as_f64().to_le_bytes())?;
                w.write_all(&[u8::from(accepted)])?;
            }
            Sink::Csv(w) => {
                let mut row: Vec<String> = x.iter().map(|v| v.as_f64().to_string()).collect();
                row.push(log_weight.as_f64().to_string());
                row.push(u8::from(accepted).to_string());
                w.write_record(&row)?;
            }
        }
        self.written += 1;
        Ok(())
    }
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    read_u64(r).map(f64::from_bits)
}

/// Reads a trace written by [`TraceWriter`] in either format.
pub fn read_trace(path: impl AsRef<Path>) -> Result<ChainTrace<f64>> {
    let path = path.as_ref();
    let mut r = BufReader::new(open(path)?);
    let mut magic = [0u8; 8];
    let binary = r.read_exact(&mut magic).is_ok() && &magic == TRACE_MAGIC;
    if !binary {
        return read_trace_csv(path);
    }
    let truncated = |_| format_error(path, "truncated trace");
    let n = read_u64(&mut r).map_err(truncated)? as usize;
    let dim = read_u64(&mut r).map_err(truncated)? as usize;
    let mut trace = ChainTrace::empty(dim);
    trace.begin(n, dim)?;
    let mut x = vec![0.0; dim];
    for _ in 0..n {
        for v in x.iter_mut() {
            *v = read_f64(&mut r).map_err(truncated)?;
        }
        let lw = read_f64(&mut r).map_err(truncated)?;
        let mut a = [0u8];
        r.read_exact(&mut a).map_err(truncated)?;
        trace.record(&x, lw, a[0] != 0)?;
    }
    Ok(trace)
}

fn read_trace_csv(path: &Path) -> Result<ChainTrace<f64>> {
    let rows = numeric_rows(path)?;
    let width = rows.first().map_or(0, Vec::len);
    if width < 2 {
        return Err(format_error(path, "not a trace file"));
    }
    let dim = width - 2;
    let mut trace = ChainTrace::empty(dim);
    trace.begin(rows.len(), dim)?;
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(format_error(path, format!("row {} has {} columns, expected {width}", i + 2, r.len())));
        }
        trace.record(&r[..dim], r[dim], r[dim + 1] != 0.0)?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{run_chain, run_chain_with, SamplerConfig, SamplerKind};
    use crate::prox::{Penalty, SeparableModel};

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("myis-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn vector_roundtrip_with_header() {
        let p = tmp("y.csv");
        let v = vec![1.5, -2.25, 1e-300, 3.0];
        write_vector_csv(&p, "y", &v).unwrap();
        assert_eq!(read_vector_csv(&p).unwrap(), v);
        std::fs::write(&p, "1\n2\n\n3\n").unwrap();
        assert_eq!(read_vector_csv(&p).unwrap(), vec![1.0, 2.0, 3.0]);
        std::fs::write(&p, "1\nx\n").unwrap();
        assert!(matches!(read_vector_csv(&p), Err(Error::Format(_))));
    }

    #[test]
    fn counts_grouped_by_class() {
        let p = tmp("counts.csv");
        std::fs::write(&p, "class_id,count\n1,4\n0,2\n1,5\n0,3\n").unwrap();
        let c = read_counts_csv(&p).unwrap();
        assert_eq!(c, vec![vec![2, 3], vec![4, 5]]);
        write_counts_csv(&p, &c).unwrap();
        assert_eq!(read_counts_csv(&p).unwrap(), c);
    }

    #[test]
    fn matrix_roundtrip() {
        let p = tmp("m.csv");
        let m = MatrixData { rows: 2, cols: 3, values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5] };
        write_matrix_csv(&p, &m).unwrap();
        assert_eq!(read_matrix_csv(&p).unwrap(), m);
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_matrix_csv(&p).is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_vector_csv("/nonexistent/dir/y.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/y.csv"));
    }

    #[test]
    fn trace_roundtrip_both_formats() {
        let model = SeparableModel::<f64>::new(3, Penalty::Abs).unwrap();
        let cfg = SamplerConfig::new(SamplerKind::MyMala, 200).with_seed(4);
        let expected = run_chain(&cfg, &model, 0.1).unwrap();
        for format in [TraceFormat::Binary, TraceFormat::Csv] {
            let p = tmp(&format!("trace.{}", format.extension()));
            let mut w = TraceWriter::create(&p, format).unwrap();
            run_chain_with(&cfg, &model, 0.1, &mut w).unwrap();
            w.finish().unwrap();
            let got = read_trace(&p).unwrap();
            assert_eq!(got, expected, "{format:?}");
        }
    }

    #[test]
    fn truncated_binary_trace_errors() {
        let p = tmp("short.bin");
        let mut bytes = TRACE_MAGIC.to_vec();
        bytes.extend(5u64.to_le_bytes());
        bytes.extend(2u64.to_le_bytes());
        bytes.extend(1.0f64.to_le_bytes());
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_trace(&p), Err(Error::Format(_))));
    }
}
