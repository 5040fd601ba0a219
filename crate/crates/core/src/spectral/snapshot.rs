//! Little-endian binary snapshots: header (u32 N, u32 mode count), then one
//! record per nonzero mode (i32 k₁, i32 k₂, f64 re û₁, im û₁, re û₂, im û₂).

use std::io::{Read, Write};

use rustfft::num_complex::Complex64;

use super::field::SpectralField;
use super::operators::RawField;
use super::GridSpec;
use crate::error::{Error, Result};

pub fn write_snapshot<W: Write>(field: &SpectralField, out: &mut W) -> Result<()> {
    let grid = field.grid();
    out.write_all(&(grid.modes_per_axis as u32).to_le_bytes())?;
    out.write_all(&(grid.mode_count() as u32).to_le_bytes())?;
    for (idx, (k1, k2)) in grid.modes() {
        let c = field.coeffs()[idx];
        out.write_all(&k1.to_le_bytes())?;
        out.write_all(&k2.to_le_bytes())?;
        for v in [c[0].re, c[0].im, c[1].re, c[1].im] {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads one snapshot. The dealiasing flag is not part of the format and is
/// supplied by the caller.
pub fn read_snapshot<R: Read>(input: &mut R, dealias: bool) -> Result<SpectralField> {
    let n = read_u32(input)? as usize;
    let count = read_u32(input)? as usize;
    let grid = GridSpec::new(n, dealias).map_err(|e| Error::Snapshot(e.to_string()))?;
    if count > grid.mode_count() {
        return Err(Error::Snapshot(format!("{count} records exceed the {} modes of N = {n}", grid.mode_count())));
    }
    let mut modes = Vec::with_capacity(count);
    for _ in 0..count {
        let k1 = read_i32(input)?;
        let k2 = read_i32(input)?;
        let mut v = [0.0; 4];
        for x in &mut v {
            *x = read_f64(input)?;
        }
        modes.push(((k1, k2), [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])]));
    }
    let raw = RawField::from_modes(grid, modes)?;
    let field = SpectralField::from_coeffs_unchecked(grid, raw.coeffs().to_vec());
    field
        .check_invariants(1e-12)
        .map_err(|e| Error::Snapshot(e.to_string()))?;
    Ok(field)
}

/// Concatenated snapshots of several fields on one grid.
pub fn write_fields<W: Write>(fields: &[SpectralField], out: &mut W) -> Result<()> {
    out.write_all(&(fields.len() as u32).to_le_bytes())?;
    for f in fields {
        write_snapshot(f, out)?;
    }
    Ok(())
}

pub fn read_fields<R: Read>(input: &mut R, dealias: bool) -> Result<Vec<SpectralField>> {
    let count = read_u32(input)? as usize;
    (0..count).map(|_| read_snapshot(input, dealias)).collect()
}

fn read_exact<const B: usize, R: Read>(input: &mut R) -> Result<[u8; B]> {
    let mut buf = [0u8; B];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Snapshot(format!("truncated snapshot: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    read_exact::<4, _>(input).map(u32::from_le_bytes)
}

fn read_i32<R: Read>(input: &mut R) -> Result<i32> {
    read_exact::<4, _>(input).map(i32::from_le_bytes)
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    read_exact::<8, _>(input).map(f64::from_le_bytes)
}
