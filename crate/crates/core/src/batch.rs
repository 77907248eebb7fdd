//! Sample batches and their on-disk formats.
//!
//! CSV: header `x0,...,x{d-1}`, one row per point.
//! Binary: magic `TGSB`, then `d` and `n` as little-endian `u64`, then
//! `n * d` little-endian `f64` values in row-major order.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const BINARY_MAGIC: [u8; 4] = *b"TGSB";

/// A row-major batch of `n` points in `d` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    dim: usize,
    data: Vec<f64>,
}

impl SampleBatch {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim, data: Vec::with_capacity(dim * n) }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::invalid(format!("flat buffer of length {} is not a multiple of dimension {dim}", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or_else(|| Error::invalid("empty batch"))?;
        let mut b = Self::with_capacity(dim, rows.len());
        for r in rows {
            b.push(r)?;
        }
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        crate::error::check_dim(self.dim, x.len())?;
        self.data.extend_from_slice(x);
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn append(&mut self, other: &SampleBatch) -> Result<()> {
        crate::error::check_dim(self.dim, other.dim)?;
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    /// Applies `f` to every row, producing a batch of dimension `out_dim`.
    pub fn map_rows(&self, out_dim: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> SampleBatch {
        let mut data = vec![0.0; out_dim * self.len()];
        for (x, y) in self.rows().zip(data.chunks_exact_mut(out_dim)) {
            f(x, y);
        }
        SampleBatch { dim: out_dim, data }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
        let dim = header.split(',').count();
        for (i, name) in header.split(',').enumerate() {
            if name.trim() != format!("x{i}") {
                return Err(Error::Format(format!("unexpected CSV header column {name:?}")));
            }
        }
        let mut batch = SampleBatch::new(dim);
        for (lineno, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("row {}: {e}", lineno + 1)))?;
            batch.push(&vals).map_err(|_| Error::Format(format!("row {} has {} columns, expected {dim}", lineno + 1, vals.len())))?;
        }
        Ok(batch)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&BINARY_MAGIC)?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != BINARY_MAGIC {
            return Err(Error::Format("bad magic in binary sample file".into()));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let dim = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        if dim == 0 {
            return Err(Error::Format("zero dimension in binary sample file".into()));
        }
        let total = dim.checked_mul(n).ok_or_else(|| Error::Format("binary header size overflow".into()))?;
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            r.read_exact(&mut word)?;
            data.push(f64::from_le_bytes(word));
        }
        Ok(SampleBatch { dim, data })
    }
}
