//! Flat binary and CSV layouts for path ensembles.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! "APFX" | version: u32 | M: u64 | N: u64 | d: u64 | M*(N+1)*d f64 values
//! ```
//!
//! The grid endpoints are not stored; readers supply the grid.

use std::io::{Read, Write};

use super::{PathEnsemble, TimeGrid};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"APFX";
pub const BINARY_VERSION: u32 = 1;

pub fn write_binary<W: Write>(x: &PathEnsemble, mut w: W) -> Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(x.scenarios() as u64).to_le_bytes())?;
    w.write_all(&(x.grid().steps() as u64).to_le_bytes())?;
    w.write_all(&(x.dim() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(x.values().len() * 8);
    for v in x.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_binary<R: Read>(mut r: R, grid: TimeGrid) -> Result<PathEnsemble> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != BINARY_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let m = read_u64(&mut r)? as usize;
    let n = read_u64(&mut r)? as usize;
    let d = read_u64(&mut r)? as usize;
    if n != grid.steps() {
        return Err(Error::Format(format!(
            "file has N={n}, grid has N={}",
            grid.steps()
        )));
    }
    let count = m
        .checked_mul(n + 1)
        .and_then(|c| c.checked_mul(d))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != count * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            raw.len()
        )));
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    PathEnsemble::new(grid, m, d, values)
}

/// Columns: `scenario,node_index,time,value_0..value_{d-1}`.
pub fn write_csv<W: Write>(x: &PathEnsemble, mut w: W) -> Result<()> {
    let mut header = String::from("scenario,node_index,time");
    for i in 0..x.dim() {
        header.push_str(&format!(",value_{i}"));
    }
    writeln!(w, "{header}")?;
    for m in 0..x.scenarios() {
        for k in 0..x.grid().len() {
            write!(w, "{m},{k},{}", x.grid().node(k))?;
            for v in x.value(m, k) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}
