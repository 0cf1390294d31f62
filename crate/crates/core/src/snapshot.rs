//! `MLABFLD1` binary container.
//!
//! Layout: 16-byte magic (`MLABFLD1` followed by eight zero bytes), then
//! little-endian `u32 d`, `u32 n`, `f64 period`, one flag byte
//! (0 = interleaved complex128), then `n^d` pairs `(re, im)` row-major.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

pub const MAGIC: [u8; 16] = *b"MLABFLD1\0\0\0\0\0\0\0\0";
const FLAG_COMPLEX128: u8 = 0;

/// A decoded container. `n` need not be a power of two here; expansion
/// factor tables reuse the format with `d = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub d: u32,
    pub n: u32,
    pub period: f64,
    pub data: Vec<Complex64>,
}

pub fn write_block<W: Write>(w: &mut W, block: &Block) -> Result<()> {
    let expected = (block.n as usize)
        .checked_pow(block.d)
        .ok_or_else(|| Error::Snapshot("sample count overflows".into()))?;
    if expected != block.data.len() {
        return Err(Error::Snapshot(format!(
            "header announces {expected} samples, block holds {}",
            block.data.len()
        )));
    }
    let mut buf = Vec::with_capacity(33 + 16 * expected);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&block.d.to_le_bytes());
    buf.extend_from_slice(&block.n.to_le_bytes());
    buf.extend_from_slice(&block.period.to_le_bytes());
    buf.push(FLAG_COMPLEX128);
    for z in &block.data {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_block<R: Read>(r: &mut R) -> Result<Block> {
    let mut magic = [0u8; 16];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4);
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4);
    r.read_exact(&mut b8)?;
    let period = f64::from_le_bytes(b8);
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    if flag[0] != FLAG_COMPLEX128 {
        return Err(Error::Snapshot(format!("unsupported flag {}", flag[0])));
    }
    let count = (n as usize)
        .checked_pow(d)
        .filter(|&c| c <= 1 << 32)
        .ok_or_else(|| Error::Snapshot(format!("implausible shape d={d} n={n}")))?;
    let mut raw = vec![0u8; 16 * count];
    r.read_exact(&mut raw)?;
    let data = raw
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok(Block { d, n, period, data })
}

pub fn write_field<W: Write>(w: &mut W, f: &Field) -> Result<()> {
    let g = f.grid();
    write_block(
        w,
        &Block {
            d: g.d() as u32,
            n: g.n() as u32,
            period: g.period(),
            data: f.samples().to_vec(),
        },
    )
}

pub fn read_field<R: Read>(r: &mut R) -> Result<Field> {
    let b = read_block(r)?;
    let grid = GridSpec::new(b.d as usize, b.n as usize, b.period)?;
    Field::new(grid, b.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip() {
        let g = GridSpec::new(2, 8, 3.5).unwrap();
        let f = Field::from_fn(g, |x| Complex64::new(x[0].sin(), x[1] * x[0]));
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        assert_eq!(buf.len(), 16 + 4 + 4 + 8 + 1 + 16 * 64);
        assert_eq!(&buf[..8], b"MLABFLD1");
        let back = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_corruption() {
        let g = GridSpec::periodic(1, 4).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &Field::zeros(g)).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_field(&mut bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[32] = 1;
        assert!(read_field(&mut bad.as_slice()).is_err());
        buf.truncate(buf.len() - 1);
        assert!(read_field(&mut buf.as_slice()).is_err());
    }
}
