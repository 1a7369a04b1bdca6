//! Grid files.
//!
//! Binary layout: `MSCANGRD`, then little-endian `u32` version (1), `u32` d,
//! `u64` n, `u32` dtype (0 = f64, 1 = i64), then `n^d` little-endian values
//! in row-major order. CSV input holds one grid row per line and is limited
//! to `d <= 2`: a single line (or a single column) is a 1-d grid, otherwise
//! the grid must be square.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use mscan::Field;

pub const GRID_MAGIC: &[u8; 8] = b"MSCANGRD";
pub const GRID_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64,
    I64,
}

impl Dtype {
    fn code(self) -> u32 {
        match self {
            Dtype::F64 => 0,
            Dtype::I64 => 1,
        }
    }
}

pub fn encode_grid(field: &Field, dtype: Dtype) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(28 + 8 * field.len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&GRID_VERSION.to_le_bytes());
    out.extend_from_slice(&(field.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(field.side() as u64).to_le_bytes());
    out.extend_from_slice(&dtype.code().to_le_bytes());
    for &v in field.values() {
        match dtype {
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            Dtype::I64 => {
                ensure!(v.fract() == 0.0 && v.abs() < 9.007_199_254_740_992e15, "value {v} is not an exact integer");
                out.extend_from_slice(&(v as i64).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_grid(bytes: &[u8]) -> Result<Field> {
    ensure!(bytes.len() >= 28 && &bytes[..8] == GRID_MAGIC, "not a grid file (bad magic)");
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(8);
    ensure!(version == GRID_VERSION, "unsupported grid version {version}");
    let d = u32_at(12) as usize;
    let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let dtype = u32_at(24);
    ensure!(d >= 1 && n >= 1, "grid header has d = {d}, n = {n}");
    let count = (n as u128).pow(d as u32);
    let payload = &bytes[28..];
    ensure!(
        payload.len() as u128 == count * 8,
        "payload holds {} bytes but {n}^{d} values need {}",
        payload.len(),
        count * 8
    );
    let chunks = payload.chunks_exact(8).map(|c| <[u8; 8]>::try_from(c).unwrap());
    let values: Vec<f64> = match dtype {
        0 => chunks.map(f64::from_le_bytes).collect(),
        1 => chunks.map(|c| i64::from_le_bytes(c) as f64).collect(),
        other => bail!("unknown grid dtype {other}"),
    };
    Ok(Field::new(d, n, values)?)
}

pub fn parse_csv_grid(text: &str) -> Result<Field> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|t| t.trim().parse::<f64>().with_context(|| format!("line {}: bad value '{}'", i + 1, t.trim())))
                .collect()
        })
        .collect::<Result<_>>()?;
    ensure!(!rows.is_empty(), "empty grid");
    if rows.len() == 1 {
        let n = rows[0].len();
        return Ok(Field::new(1, n, rows.into_iter().next().unwrap())?);
    }
    if rows.iter().all(|r| r.len() == 1) {
        let n = rows.len();
        return Ok(Field::new(1, n, rows.into_iter().flatten().collect())?);
    }
    let n = rows.len();
    for (i, r) in rows.iter().enumerate() {
        ensure!(r.len() == n, "row {} has {} values; a 2-d grid must be {n} x {n}", i + 1, r.len());
    }
    Ok(Field::new(2, n, rows.into_iter().flatten().collect())?)
}

pub fn to_csv_grid(field: &Field) -> Result<String> {
    let n = field.side();
    let fmt = |row: &[f64]| row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
    match field.dim() {
        1 => Ok(fmt(field.values()) + "\n"),
        2 => Ok(field.values().chunks(n).map(|r| fmt(r) + "\n").collect()),
        d => bail!("CSV grids are limited to d <= 2, got d = {d}"),
    }
}

/// Reads a binary grid, or a CSV grid when the magic is absent.
pub fn read_grid(path: &Path) -> Result<Field> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(GRID_MAGIC) {
        decode_grid(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes).context("grid is neither binary nor UTF-8 CSV")?;
        parse_csv_grid(text)
    }
}

pub fn write_grid(path: &Path, field: &Field, dtype: Dtype) -> Result<()> {
    std::fs::write(path, encode_grid(field, dtype)?).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let f = Field::new(2, 3, vec![1.5, -2.0, 0.0, 3.25, 1e-300, 7.0, 8.0, 9.0, -0.5]).unwrap();
        assert_eq!(decode_grid(&encode_grid(&f, Dtype::F64).unwrap()).unwrap(), f);
        let ints = Field::new(1, 4, vec![0.0, 3.0, -7.0, 12.0]).unwrap();
        let bytes = encode_grid(&ints, Dtype::I64).unwrap();
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 1);
        assert_eq!(decode_grid(&bytes).unwrap(), ints);
        assert!(encode_grid(&f, Dtype::I64).is_err());
    }

    #[test]
    fn malformed_binary() {
        let f = Field::zeros(2, 4);
        let bytes = encode_grid(&f, Dtype::F64).unwrap();
        assert!(decode_grid(&bytes[..bytes.len() - 8]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_grid(&bad).is_err());
        let mut bad = bytes;
        bad[24] = 9;
        assert!(decode_grid(&bad).is_err());
    }

    #[test]
    fn csv_layouts() {
        let f = parse_csv_grid("1,2\n3,4\n").unwrap();
        assert_eq!((f.dim(), f.side()), (2, 2));
        assert_eq!(f.values(), &[1.0, 2.0, 3.0, 4.0]);
        let row = parse_csv_grid("1, 2, 3").unwrap();
        assert_eq!((row.dim(), row.side()), (1, 3));
        let col = parse_csv_grid("1\n2\n3\n").unwrap();
        assert_eq!(col, row);
        assert!(parse_csv_grid("1,2\n3\n").is_err());
        assert!(parse_csv_grid("1,x").is_err());
        assert_eq!(parse_csv_grid(&to_csv_grid(&f).unwrap()).unwrap(), f);
    }
}
