//! Binary field checkpoints.
//!
//! Layout (little endian): magic `BFLB`, version `u16`, dim `u8`, scalar kind
//! `u8`, `N` as `u32` per axis, `L` as `f64` per axis, representation `u8`,
//! flags `u8`, zero padding up to a multiple of 16 bytes (32 in 1D, 48 in 2D).
//! The payload follows: `f64` re parts for real physical fields, interleaved
//! re/im pairs otherwise.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;

use super::field::{Field, Representation, ScalarKind};
use super::grid::SpectralGrid;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BFLB";
pub const VERSION: u16 = 1;

const FLAG_ZERO_MEAN: u8 = 1;

pub fn header_len(dim: usize) -> usize {
    let raw = 8 + 12 * dim + 2;
    raw.div_ceil(16) * 16
}

pub fn write_field<W: Write>(mut w: W, field: &Field) -> Result<()> {
    let grid = field.grid();
    let dim = grid.dim();
    let mut header = Vec::with_capacity(header_len(dim));
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.push(dim as u8);
    header.push(match field.kind() {
        ScalarKind::Real => 0,
        ScalarKind::Complex => 1,
    });
    for a in 0..dim {
        header.extend_from_slice(&(grid.n(a) as u32).to_le_bytes());
    }
    for a in 0..dim {
        header.extend_from_slice(&grid.length(a).to_le_bytes());
    }
    header.push(match field.representation() {
        Representation::Physical => 0,
        Representation::Spectral => 1,
    });
    header.push(if field.zero_mean_required() {
        FLAG_ZERO_MEAN
    } else {
        0
    });
    header.resize(header_len(dim), 0);
    w.write_all(&header)?;

    let compact = field.kind() == ScalarKind::Real
        && field.representation() == Representation::Physical;
    let mut payload = Vec::with_capacity(field.data().len() * if compact { 8 } else { 16 });
    for v in field.data() {
        payload.extend_from_slice(&v.re.to_le_bytes());
        if !compact {
            payload.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<Field> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = head[6] as usize;
    if !(1..=2).contains(&dim) {
        return Err(Error::Format(format!("bad dimension {dim}")));
    }
    let kind = match head[7] {
        0 => ScalarKind::Real,
        1 => ScalarKind::Complex,
        k => return Err(Error::Format(format!("bad scalar kind {k}"))),
    };
    let mut rest = vec![0u8; header_len(dim) - 8];
    r.read_exact(&mut rest)?;
    let mut n = [0usize; 2];
    let mut l = [0f64; 2];
    for a in 0..dim {
        n[a] = u32::from_le_bytes(rest[4 * a..4 * a + 4].try_into().unwrap()) as usize;
    }
    let off = 4 * dim;
    for a in 0..dim {
        l[a] = f64::from_le_bytes(rest[off + 8 * a..off + 8 * a + 8].try_into().unwrap());
    }
    let off = 12 * dim;
    let repr = match rest[off] {
        0 => Representation::Physical,
        1 => Representation::Spectral,
        k => return Err(Error::Format(format!("bad representation {k}"))),
    };
    let zero_mean = rest[off + 1] & FLAG_ZERO_MEAN != 0;
    let grid = Arc::new(if dim == 1 {
        SpectralGrid::new_1d(n[0], l[0])?
    } else {
        SpectralGrid::new_2d(n[0], l[0], n[1], l[1])?
    });

    let compact = kind == ScalarKind::Real && repr == Representation::Physical;
    let width = if compact { 8 } else { 16 };
    let mut payload = vec![0u8; grid.len() * width];
    r.read_exact(&mut payload)?;
    let data = payload
        .chunks_exact(width)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = if compact {
                0.0
            } else {
                f64::from_le_bytes(c[8..16].try_into().unwrap())
            };
            Complex64::new(re, im)
        })
        .collect();
    let field = Field::from_raw(&grid, kind, repr, data)?;
    Ok(if zero_mean {
        field.flag_zero_mean()
    } else {
        field
    })
}

pub fn save(path: &std::path::Path, field: &Field) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_field(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<Field> {
    let file = std::fs::File::open(path)?;
    read_field(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_sizes() {
        assert_eq!(header_len(1), 32);
        assert_eq!(header_len(2), 48);
    }

    #[test]
    fn round_trip_real_and_complex() {
        let g = Arc::new(SpectralGrid::new_1d(32, 3.0).unwrap());
        let u = Field::from_fn(&g, |x| (2.0 * x).sin() + 0.1).with_zero_mean();
        let mut buf = Vec::new();
        write_field(&mut buf, &u).unwrap();
        assert_eq!(buf.len(), 32 + 32 * 8);
        let back = read_field(buf.as_slice()).unwrap();
        assert_eq!(back, u);

        let z = Field::from_fn_complex(&g, |x| Complex64::new(x.cos(), x.sin())).to_spectral();
        let mut buf = Vec::new();
        write_field(&mut buf, &z).unwrap();
        assert_eq!(read_field(buf.as_slice()).unwrap(), z);
    }

    #[test]
    fn round_trip_2d() {
        let g = Arc::new(SpectralGrid::new_2d(16, 1.0, 32, 2.0).unwrap());
        let u = Field::from_fn_2d(&g, |x, y| x * y);
        let mut buf = Vec::new();
        write_field(&mut buf, &u).unwrap();
        assert_eq!(&buf[..4], MAGIC);
        assert_eq!(read_field(buf.as_slice()).unwrap(), u);
    }

    #[test]
    fn rejects_bad_magic() {
        let buf = vec![0u8; 64];
        assert!(matches!(read_field(buf.as_slice()), Err(Error::Format(_))));
    }
}
