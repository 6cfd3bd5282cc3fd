//! File formats.
//!
//! * Matrices and vectors: header-less CSV, one matrix row per line.
//! * Constraints: TOML with keys `total`, `row_sums`, `col_sums` (inline list
//!   or path to a CSV vector, relative to the constraints file),
//!   `fixed_cells` (list of 1-based `[i, j, value]`) and `symmetric`.
//! * Weight checkpoints: little-endian binary, see [`write_checkpoint`].
//! * Sample streams: JSON lines or CSV, one record per retained iteration.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use odm_core::{ConstraintSet, ContingencyTable, FixedCell, NetworkWeights};
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

/// A dense row-major matrix read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<T>,
}

fn parse_cell<T: FromStr>(path: &Path, line: usize, s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e| EngineError::format(path, format!("line {line}: {e} in {s:?}")))
}

pub fn read_matrix<T: FromStr>(path: &Path) -> Result<Matrix<T>>
where
    T::Err: std::fmt::Display,
{
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| EngineError::format(path, e))?;
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| EngineError::format(path, e))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(EngineError::format(
                    path,
                    format!("line {}: expected {c} columns, got {}", line + 1, rec.len()),
                ))
            }
            _ => {}
        }
        for s in rec.iter() {
            values.push(parse_cell(path, line + 1, s)?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| EngineError::format(path, "empty matrix"))?;
    Ok(Matrix { rows, cols, values })
}

/// A vector stored either as one row or as one column.
pub fn read_vector<T: FromStr>(path: &Path) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let m = read_matrix(path)?;
    if m.rows != 1 && m.cols != 1 {
        return Err(EngineError::format(path, format!("expected a vector, got {}x{}", m.rows, m.cols)));
    }
    Ok(m.values)
}

pub fn read_table(path: &Path) -> Result<ContingencyTable> {
    let m = read_matrix::<u64>(path)?;
    Ok(ContingencyTable::new(m.rows, m.cols, m.values)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| EngineError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| EngineError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| EngineError::io(path, e))
}

pub fn matrix_to_csv<T: std::fmt::Debug>(cols: usize, values: &[T]) -> String {
    let mut s = String::new();
    for row in values.chunks(cols.max(1)) {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v:?}");
        }
        s.push('\n');
    }
    s
}

pub fn write_matrix<T: std::fmt::Debug>(path: &Path, cols: usize, values: &[T]) -> Result<()> {
    write_text(path, &matrix_to_csv(cols, values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MarginSpec {
    Inline(Vec<u64>),
    Path(PathBuf),
}

/// On-disk form of a constraint set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_sums: Option<MarginSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_sums: Option<MarginSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed_cells: Vec<[u64; 3]>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub symmetric: bool,
}

impl ConstraintsFile {
    pub fn from_set(c: &ConstraintSet) -> Self {
        Self {
            total: c.total,
            row_sums: c.row_sums.clone().map(MarginSpec::Inline),
            col_sums: c.col_sums.clone().map(MarginSpec::Inline),
            fixed_cells: c
                .fixed_cells
                .iter()
                .map(|f| [f.row as u64 + 1, f.col as u64 + 1, f.value])
                .collect(),
            symmetric: c.symmetric,
        }
    }

    /// Resolves margin paths against `base` and converts to 0-based cells.
    pub fn resolve(&self, base: &Path) -> Result<ConstraintSet> {
        let margin = |m: &Option<MarginSpec>| -> Result<Option<Vec<u64>>> {
            match m {
                None => Ok(None),
                Some(MarginSpec::Inline(v)) => Ok(Some(v.clone())),
                Some(MarginSpec::Path(p)) => read_vector(&base.join(p)).map(Some),
            }
        };
        let mut cells = Vec::with_capacity(self.fixed_cells.len());
        for &[i, j, v] in &self.fixed_cells {
            if i == 0 || j == 0 {
                return Err(EngineError::Config(format!(
                    "fixed cell [{i}, {j}, {v}]: indices are 1-based"
                )));
            }
            cells.push(FixedCell::new(i as usize - 1, j as usize - 1, v));
        }
        Ok(ConstraintSet {
            total: self.total,
            row_sums: margin(&self.row_sums)?,
            col_sums: margin(&self.col_sums)?,
            fixed_cells: cells,
            symmetric: self.symmetric,
        })
    }
}

pub fn read_constraints(path: &Path) -> Result<ConstraintSet> {
    let text = fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
    let file: ConstraintsFile = toml::from_str(&text).map_err(|e| EngineError::format(path, e))?;
    file.resolve(path.parent().unwrap_or(Path::new(".")))
}

pub fn write_constraints(path: &Path, c: &ConstraintSet) -> Result<()> {
    let text = toml::to_string(&ConstraintsFile::from_set(c)).map_err(|e| EngineError::format(path, e))?;
    write_text(path, &text)
}

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ODMW";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Layout, all little-endian: magic `ODMW`, `u32` version, `u64` J, `u64` H,
/// then the flat weights (`W1` row-major J x H, `b1`, `W2` row-major H x 2,
/// `b2`) as `f64`.
pub fn write_checkpoint(path: &Path, w: &NetworkWeights) -> Result<()> {
    let mut out = create(path)?;
    let flat = w.flat();
    let mut buf = Vec::with_capacity(24 + 8 * flat.len());
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(w.inputs() as u64).to_le_bytes());
    buf.extend_from_slice(&(w.hidden() as u64).to_le_bytes());
    for v in flat {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf).and_then(|_| out.flush()).map_err(|e| EngineError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<NetworkWeights> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| EngineError::io(path, e))?;
    let bad = |m: &str| EngineError::format(path, m);
    if bytes.len() < 24 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("not a weight checkpoint"));
    }
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad("unsupported checkpoint version"));
    }
    let (j, h) = (u64_at(8) as usize, u64_at(16) as usize);
    let body = &bytes[24..];
    if body.len() % 8 != 0 {
        return Err(bad("truncated checkpoint"));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(NetworkWeights::from_flat(j, h, &flat)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StreamFormat {
    Csv,
    #[default]
    Jsonl,
}

impl StreamFormat {
    pub fn extension(self) -> &'static str {
        match self {
            StreamFormat::Csv => "csv",
            StreamFormat::Jsonl => "jsonl",
        }
    }

    fn of(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(StreamFormat::Csv),
            "jsonl" => Some(StreamFormat::Jsonl),
            _ => None,
        }
    }
}

/// Writes one stream of records with a fixed value count.
///
/// A JSON line is `{"iteration":n,"member":e,"values":[...]}`; a CSV
/// stream has the header `iteration,member,<names>`. Iterations are
/// 1-based. Reals are written in the shortest form that reads back exactly.
pub struct StreamWriter {
    path: PathBuf,
    format: StreamFormat,
    out: BufWriter<File>,
    line: String,
}

impl StreamWriter {
    pub fn create(path: &Path, format: StreamFormat, names: &[String]) -> Result<Self> {
        let mut w = Self {
            path: path.to_path_buf(),
            format,
            out: create(path)?,
            line: String::new(),
        };
        if format == StreamFormat::Csv {
            w.line.push_str("iteration,member");
            for n in names {
                w.line.push(',');
                w.line.push_str(n);
            }
            w.line.push('\n');
            w.flush_line()?;
        }
        Ok(w)
    }

    fn flush_line(&mut self) -> Result<()> {
        let r = self.out.write_all(self.line.as_bytes());
        self.line.clear();
        r.map_err(|e| EngineError::io(&self.path, e))
    }

    pub fn write<T: std::fmt::Debug>(&mut self, iteration: usize, member: usize, values: &[T]) -> Result<()> {
        match self.format {
            StreamFormat::Jsonl => {
                let _ = write!(self.line, "{{\"iteration\":{iteration},\"member\":{member},\"values\":[");
                for (k, v) in values.iter().enumerate() {
                    if k > 0 {
                        self.line.push(',');
                    }
                    let _ = write!(self.line, "{v:?}");
                }
                self.line.push_str("]}\n");
            }
            StreamFormat::Csv => {
                let _ = write!(self.line, "{iteration},{member}");
                for v in values {
                    let _ = write!(self.line, ",{v:?}");
                }
                self.line.push('\n');
            }
        }
        self.flush_line()
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| EngineError::io(&self.path, e))
    }
}

/// One record read back from a stream.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Record {
    pub iteration: usize,
    pub member: usize,
    pub values: Vec<f64>,
}

pub fn read_stream(path: &Path) -> Result<Vec<Record>> {
    let format = StreamFormat::of(path)
        .ok_or_else(|| EngineError::format(path, "unknown stream extension"))?;
    let file = File::open(path).map_err(|e| EngineError::io(path, e))?;
    let mut out = Vec::new();
    match format {
        StreamFormat::Jsonl => {
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| EngineError::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: Record = serde_json::from_str(&line)
                    .map_err(|e| EngineError::format(path, format!("line {}: {e}", n + 1)))?;
                out.push(rec);
            }
        }
        StreamFormat::Csv => {
            let mut reader = csv::Reader::from_reader(file);
            for (n, rec) in reader.records().enumerate() {
                let rec = rec.map_err(|e| EngineError::format(path, e))?;
                let line = n + 2;
                let mut it = rec.iter();
                let iteration = parse_cell(path, line, it.next().unwrap_or(""))?;
                let member = parse_cell(path, line, it.next().unwrap_or(""))?;
                let values = it.map(|s| parse_cell(path, line, s)).collect::<Result<_>>()?;
                out.push(Record {
                    iteration,
                    member,
                    values,
                });
            }
        }
    }
    Ok(out)
}

/// Appends `parts` to `dest` byte for byte, then removes them.
pub fn concatenate(dest: &Path, parts: &[PathBuf], skip_header_after_first: bool) -> Result<()> {
    let mut out = create(dest)?;
    for (k, p) in parts.iter().enumerate() {
        let mut reader = BufReader::new(File::open(p).map_err(|e| EngineError::io(p, e))?);
        if k > 0 && skip_header_after_first {
            let mut header = String::new();
            reader.read_line(&mut header).map_err(|e| EngineError::io(p, e))?;
        }
        std::io::copy(&mut reader, &mut out).map_err(|e| EngineError::io(dest, e))?;
    }
    out.flush().map_err(|e| EngineError::io(dest, e))?;
    for p in parts {
        fs::remove_file(p).map_err(|e| EngineError::io(p, e))?;
    }
    Ok(())
}
