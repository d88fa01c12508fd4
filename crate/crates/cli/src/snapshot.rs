//! Binary wavefunction snapshots.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `PWSNAP1\0` |
//! | 8 | time `t` (f64) |
//! | 4 | name length `L` (u32), then `L` bytes of UTF-8 |
//! | 4 | number of axes `d` (u32) |
//! | 24·d | per axis: points (u64), min (f64), max (f64) |
//! | 16·N | values, real and imaginary parts interleaved (f64), row-major |

use std::io::{Read, Write};

use anyhow::{bail, Result};
use pilotwave::{Axis, Complex64, ComplexField, Grid};

pub const MAGIC: &[u8; 8] = b"PWSNAP1\0";

pub fn write_snapshot(w: &mut impl Write, t: f64, name: &str, field: &ComplexField) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&t.to_le_bytes())?;
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    let axes = field.grid().axes();
    w.write_all(&(axes.len() as u32).to_le_bytes())?;
    for a in axes {
        w.write_all(&(a.n as u64).to_le_bytes())?;
        w.write_all(&a.min.to_le_bytes())?;
        w.write_all(&a.max.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(16 * field.values().len());
    for v in field.values() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

/// Reads one snapshot: `(t, name, field)`.
pub fn read_snapshot(r: &mut impl Read) -> Result<(f64, String, ComplexField)> {
    if &take::<8>(r)? != MAGIC {
        bail!("not a pilotwave snapshot");
    }
    let t = f64::from_le_bytes(take(r)?);
    let len = u32::from_le_bytes(take(r)?) as usize;
    let mut name = vec![0u8; len];
    r.read_exact(&mut name)?;
    let d = u32::from_le_bytes(take(r)?) as usize;
    if d == 0 || d > 2 {
        bail!("snapshot has {d} axes");
    }
    let mut axes = Vec::with_capacity(d);
    for _ in 0..d {
        let n = u64::from_le_bytes(take(r)?) as usize;
        let min = f64::from_le_bytes(take(r)?);
        let max = f64::from_le_bytes(take(r)?);
        axes.push(Axis::new(n, min, max)?);
    }
    let grid = Grid::from_axes(axes)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = f64::from_le_bytes(take(r)?);
        let im = f64::from_le_bytes(take(r)?);
        values.push(Complex64::new(re, im));
    }
    Ok((t, String::from_utf8(name)?, ComplexField::new(grid, values)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let g = Grid::from_axes(vec![Axis::new(16, -1.0, 1.0).unwrap(), Axis::new(32, 0.0, 2.0).unwrap()]).unwrap();
        let f = ComplexField::from_fn(g, |p| Complex64::new(p[0] * 0.1, p[1] - 1.0 / 3.0));
        let mut buf = Vec::new();
        write_snapshot(&mut buf, 1.25, "b0_xz", &f).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(buf.len(), 8 + 8 + 4 + 5 + 4 + 2 * 24 + 16 * 512);
        let (t, name, back) = read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!((t, name.as_str()), (1.25, "b0_xz"));
        assert_eq!(back.values(), f.values());
        assert_eq!(back.grid().axes(), f.grid().axes());
    }

    #[test]
    fn bad_magic_and_truncation_fail() {
        assert!(read_snapshot(&mut &b"NOTASNAP........"[..]).is_err());
        let f = ComplexField::from_fn(Grid::line(16, 0.0, 1.0).unwrap(), |_| Complex64::new(1.0, 0.0));
        let mut buf = Vec::new();
        write_snapshot(&mut buf, 0.0, "x", &f).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(read_snapshot(&mut buf.as_slice()).is_err());
    }
}
