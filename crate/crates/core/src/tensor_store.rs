//! Binary tensor files and aligned text tables.
//!
//! Tensor layout (all integers little-endian):
//!
//! | offset | size      | field                          |
//! |--------|-----------|--------------------------------|
//! | 0      | 8         | magic `TAGTENS1`               |
//! | 8      | 1         | dtype code (0 = f32)           |
//! | 9      | 1         | ndim (1..=3)                   |
//! | 10     | 8 × ndim  | dims, u64 each                 |
//! | ...    | 4 × ∏dims | row-major f32 payload          |
//!
//! Text records are JSON lines `{"id": u64, "text": str, "source": str}`
//! whose ids run `0..N` and align with the rows of an `N × D` tensor.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TAGTENS1";
pub const DTYPE_F32: u8 = 0;
const MAX_NDIM: usize = 3;

/// A dense f32 tensor of rank 1 to 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    values: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_NDIM {
            return Err(Error::format(
                "ndim",
                format!("expected 1..={MAX_NDIM} dimensions, got {}", dims.len()),
            ));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::format("dims", format!("dimension {i} is zero")));
        }
        let count = element_count(&dims)?;
        if count != values.len() {
            return Err(Error::format(
                "payload",
                format!("dims {dims:?} need {count} values, got {}", values.len()),
            ));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Reinterpret a rank-2 tensor as a matrix.
    pub fn into_matrix(self) -> Result<Matrix> {
        match self.dims[..] {
            [rows, cols] => Ok(Matrix {
                rows,
                cols,
                data: self.values,
            }),
            _ => Err(Error::format(
                "ndim",
                format!("expected a 2-d tensor, got dims {:?}", self.dims),
            )),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 8 * self.dims.len() + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(Error::format("magic", "file does not start with TAGTENS1"));
        }
        let header = bytes
            .get(8..10)
            .ok_or_else(|| Error::format("ndim", "truncated header"))?;
        if header[0] != DTYPE_F32 {
            return Err(Error::format(
                "dtype",
                format!("unsupported dtype code {}", header[0]),
            ));
        }
        let ndim = header[1] as usize;
        if ndim == 0 || ndim > MAX_NDIM {
            return Err(Error::format(
                "ndim",
                format!("expected 1..={MAX_NDIM} dimensions, got {ndim}"),
            ));
        }
        let dims_end = 10 + 8 * ndim;
        let dim_bytes = bytes
            .get(10..dims_end)
            .ok_or_else(|| Error::format("dims", "truncated dimension list"))?;
        let mut dims = Vec::with_capacity(ndim);
        for chunk in dim_bytes.chunks_exact(8) {
            let d = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            let d = usize::try_from(d)
                .map_err(|_| Error::format("dims", format!("dimension {d} overflows")))?;
            if d == 0 {
                return Err(Error::format("dims", "zero-length dimension"));
            }
            dims.push(d);
        }
        let count = element_count(&dims)?;
        let payload = &bytes[dims_end..];
        let expected = count
            .checked_mul(4)
            .ok_or_else(|| Error::format("dims", "payload size overflows"))?;
        if payload.len() != expected {
            return Err(Error::format(
                "payload",
                format!("expected {expected} bytes, found {}", payload.len()),
            ));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        Ok(Self { dims, values })
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d)
            .ok_or_else(|| Error::format("dims", format!("element count of {dims:?} overflows")))
    })
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

pub fn save_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Row-major f32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::format(
                "payload",
                format!("{rows}x{cols} matrix needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn empty() -> Self {
        Self {
            rows: 0,
            cols: 0,
            data: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(vec![self.rows, self.cols], self.data.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: u64,
    pub text: String,
    #[serde(default)]
    pub source: String,
}

/// Read JSON-lines text records. Blank lines are skipped.
pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<TextRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TextRecord = serde_json::from_str(&line).map_err(|e| {
            Error::format("records", format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if record.id != records.len() as u64 {
            return Err(Error::format(
                "id",
                format!(
                    "{}:{}: expected id {}, found {}",
                    path.display(),
                    lineno + 1,
                    records.len(),
                    record.id
                ),
            ));
        }
        if record.text.is_empty() {
            return Err(Error::format(
                "text",
                format!("{}:{}: empty text", path.display(), lineno + 1),
            ));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn save_records(records: &[TextRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Text records aligned row-for-row with an embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTextTable {
    pub records: Vec<TextRecord>,
    pub embeddings: Matrix,
}

impl AlignedTextTable {
    pub fn new(records: Vec<TextRecord>, embeddings: Matrix) -> Result<Self> {
        if records.len() != embeddings.rows() {
            return Err(Error::Alignment {
                records: records.len(),
                rows: embeddings.rows(),
            });
        }
        for (i, r) in records.iter().enumerate() {
            if r.id != i as u64 {
                return Err(Error::format("id", format!("record {i} carries id {}", r.id)));
            }
            if r.text.is_empty() {
                return Err(Error::format("text", format!("record {i} has empty text")));
            }
        }
        Ok(Self {
            records,
            embeddings,
        })
    }

    /// Build a table from plain strings, numbering records from zero.
    pub fn from_texts<S: Into<String>>(
        texts: impl IntoIterator<Item = S>,
        source: &str,
        embeddings: Matrix,
    ) -> Result<Self> {
        let records = texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| TextRecord {
                id: i as u64,
                text: t.into(),
                source: source.to_string(),
            })
            .collect();
        Self::new(records, embeddings)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn save(&self, records_path: impl AsRef<Path>, embeddings_path: impl AsRef<Path>) -> Result<()> {
        save_records(&self.records, records_path)?;
        if !self.is_empty() {
            save_tensor(&self.embeddings.to_tensor()?, embeddings_path)?;
        }
        Ok(())
    }
}

/// Load a record file and its embedding matrix. A record file with no
/// entries yields an empty table without requiring the embedding file.
pub fn load_text_table(
    records_path: impl AsRef<Path>,
    embeddings_path: impl AsRef<Path>,
) -> Result<AlignedTextTable> {
    let records = load_records(records_path)?;
    let embeddings_path = embeddings_path.as_ref();
    if records.is_empty() && !embeddings_path.exists() {
        return Ok(AlignedTextTable {
            records,
            embeddings: Matrix::empty(),
        });
    }
    let embeddings = load_tensor(embeddings_path)?.into_matrix()?;
    AlignedTextTable::new(records, embeddings)
}
