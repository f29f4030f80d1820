use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MAGIC: &[u8; 6] = b"MFSF01";

/// Handle to one registered tensor: a row-major `(rows, cols)` block of the
/// flat parameter array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TensorId {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutRecord {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

/// Flat storage for every trainable parameter plus a gradient accumulator of
/// the same length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    values: Vec<f64>,
    grads: Vec<f64>,
    layout: Vec<LayoutRecord>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    len: usize,
    layout: Vec<LayoutRecord>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a zero-initialized `(rows, cols)` tensor.
    pub fn register(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> TensorId {
        let id = TensorId {
            offset: self.values.len(),
            rows,
            cols,
        };
        self.layout.push(LayoutRecord {
            name: name.into(),
            offset: id.offset,
            shape: vec![rows, cols],
        });
        self.values.resize(id.offset + id.len(), 0.0);
        self.grads.resize(id.offset + id.len(), 0.0);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    pub fn layout(&self) -> &[LayoutRecord] {
        &self.layout
    }

    pub fn tensor(&self, id: TensorId) -> &[f64] {
        &self.values[id.range()]
    }

    pub fn tensor_mut(&mut self, id: TensorId) -> &mut [f64] {
        &mut self.values[id.range()]
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescales the gradient so its global norm does not exceed `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            self.grads.iter_mut().for_each(|g| *g *= scale);
        }
        norm
    }

    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.layout == other.layout && self.values.len() == other.values.len()
    }

    /// Copies parameter values from `other`; layouts must match exactly.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::InvalidArgument(format!(
                "parameter layout mismatch: {} tensors / {} values vs {} tensors / {} values",
                self.layout.len(),
                self.values.len(),
                other.layout.len(),
                other.values.len()
            )));
        }
        self.values.copy_from_slice(&other.values);
        Ok(())
    }

    /// Writes the `MFSF01` binary: magic, little-endian u64 header length,
    /// JSON header, then the values as little-endian f64 in layout order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            len: self.values.len(),
            layout: self.layout.clone(),
        })?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, expected MFSF01".into()));
        }
        let mut len_bytes = [0u8; 8];
        r.read_exact(&mut len_bytes)?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)?;
        validate_layout(&header.layout, header.len)?;
        let mut raw = vec![0u8; header.len * 8];
        r.read_exact(&mut raw)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            grads: vec![0.0; values.len()],
            values,
            layout: header.layout,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

/// Layout regions must tile `[0, len)` in order without gaps or overlap.
fn validate_layout(layout: &[LayoutRecord], len: usize) -> Result<()> {
    let mut cursor = 0;
    for rec in layout {
        if rec.offset != cursor {
            return Err(Error::Format(format!(
                "tensor `{}` starts at {} but previous region ends at {}",
                rec.name, rec.offset, cursor
            )));
        }
        cursor += rec.shape.iter().product::<usize>();
    }
    if cursor != len {
        return Err(Error::Format(format!(
            "layout covers {cursor} values but header declares {len}"
        )));
    }
    Ok(())
}
