//! "QG2S" binary field snapshots.
//!
//! Layout, all little-endian: the four magic bytes `QG2S`, a `u32` format
//! version, `u32` grid size `n`, `u32` field count, then for each field the
//! `n × n` physical-space values as `f64` in row-major order (`y` major).

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{QgError, Result};
use crate::spectral::{Grid, SpectralField};

pub const MAGIC: [u8; 4] = *b"QG2S";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(mut out: W, fields: &[&SpectralField]) -> Result<()> {
    let first = fields
        .first()
        .ok_or_else(|| QgError::Format("a snapshot needs at least one field".into()))?;
    for f in fields {
        first.check_grid(f)?;
    }
    let n = first.grid().n() as u32;
    out.write_all(&MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&(fields.len() as u32).to_le_bytes())?;
    for f in fields {
        for v in f.to_physical() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Raw snapshot contents: grid size and per-field physical values.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub n: usize,
    pub fields: Vec<Vec<f64>>,
}

impl Snapshot {
    pub fn to_spectral(&self, grid: &Arc<Grid>) -> Result<Vec<SpectralField>> {
        if grid.n() != self.n {
            return Err(QgError::Dimension(format!("snapshot n = {} but grid n = {}", self.n, grid.n())));
        }
        self.fields.iter().map(|v| SpectralField::from_physical(grid, v)).collect()
    }
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<Snapshot> {
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    if word != MAGIC {
        return Err(QgError::Format(format!("bad magic {word:?}")));
    }
    let read_u32 = |input: &mut R| -> Result<u32> {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    };
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(QgError::Format(format!("unsupported version {version}")));
    }
    let n = read_u32(&mut input)? as usize;
    let count = read_u32(&mut input)? as usize;
    let mut fields = Vec::with_capacity(count);
    let mut b = [0u8; 8];
    for _ in 0..count {
        let mut values = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            input.read_exact(&mut b)?;
            values.push(f64::from_le_bytes(b));
        }
        fields.push(values);
    }
    Ok(Snapshot { n, fields })
}
