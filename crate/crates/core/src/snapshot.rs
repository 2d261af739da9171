//! Field snapshot files.
//!
//! Binary layout (little endian): magic `b"MFOC"`, version `u32`, `d u32`,
//! `n u32`, `count u64`, then `count` `f64` values in row-major node order.
//! A trajectory file is a plain concatenation of snapshot records.
//!
//! The CSV alternative has one row per node: `i0[,i1[,i2]],value`.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};

pub const MAGIC: &[u8; 4] = b"MFOC";
pub const VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(mut w: W, field: &ScalarField) -> Result<()> {
    let g = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    w.write_all(&(g.n() as u32).to_le_bytes())?;
    w.write_all(&(g.len() as u64).to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        let k = r.read(&mut buf[filled..])?;
        if k == 0 {
            if filled == 0 {
                return Ok(false);
            }
            return Err(Error::Format("truncated snapshot record".into()));
        }
        filled += k;
    }
    Ok(true)
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// Reads the next record, or `None` at a clean end of stream.
pub fn read_record<R: Read>(r: &mut R) -> Result<Option<ScalarField>> {
    let mut header = [0u8; 24];
    if !read_exact_or_eof(r, &mut header)? {
        return Ok(None);
    }
    if &header[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32_at(&header, 4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = u32_at(&header, 8) as usize;
    let n = u32_at(&header, 12) as usize;
    let count = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let grid = TorusGrid::new(dim, n)?;
    if count != grid.len() {
        return Err(Error::Format(format!("count {count} does not match {n}^{dim}")));
    }
    let mut raw = vec![0u8; count * 8];
    if !read_exact_or_eof(r, &mut raw)? {
        return Err(Error::Format("missing snapshot payload".into()));
    }
    let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Some(ScalarField::new(&grid, values)?))
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<ScalarField> {
    read_record(&mut r)?.ok_or_else(|| Error::Format("empty snapshot file".into()))
}

pub fn write_trajectory<W: Write>(mut w: W, fields: &[ScalarField]) -> Result<()> {
    for f in fields {
        write_snapshot(&mut w, f)?;
    }
    Ok(())
}

pub fn read_trajectory<R: Read>(mut r: R) -> Result<Vec<ScalarField>> {
    let mut out = Vec::new();
    while let Some(f) = read_record(&mut r)? {
        out.push(f);
    }
    Ok(out)
}

pub fn write_csv<W: Write>(mut w: W, field: &ScalarField) -> Result<()> {
    let g = field.grid();
    let header: Vec<String> = (0..g.dim()).map(|a| format!("i{a}")).collect();
    writeln!(w, "{},value", header.join(","))?;
    for (flat, v) in field.values().iter().enumerate() {
        let idx = g.multi_index(flat);
        let cols: Vec<String> = idx[..g.dim()].iter().map(|i| i.to_string()).collect();
        writeln!(w, "{},{:e}", cols.join(","), v)?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R, grid: &TorusGrid) -> Result<ScalarField> {
    let mut values = vec![f64::NAN; grid.len()];
    let mut seen = 0usize;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != grid.dim() + 1 {
            return Err(Error::Format(format!("line {}: expected {} columns", lineno + 1, grid.dim() + 1)));
        }
        let mut idx = [0usize; 3];
        for a in 0..grid.dim() {
            idx[a] = parts[a]
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad index", lineno + 1)))?;
            if idx[a] >= grid.n() {
                return Err(Error::Format(format!("line {}: index out of range", lineno + 1)));
            }
        }
        let v: f64 = parts[grid.dim()]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad value", lineno + 1)))?;
        values[grid.flat_index(&idx[..grid.dim()])] = v;
        seen += 1;
    }
    if seen != grid.len() {
        return Err(Error::Format(format!("{seen} rows for {} nodes", grid.len())));
    }
    ScalarField::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let g = TorusGrid::new(2, 4).unwrap();
        let f = g.sample(|x| x[0] - x[1]);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], b"MFOC");
        assert_eq!(u32_at(&buf, 4), 1);
        assert_eq!(u32_at(&buf, 8), 2);
        assert_eq!(u32_at(&buf, 12), 4);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 16);
        assert_eq!(buf.len(), 24 + 16 * 8);
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), f.values()[0]);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(read_snapshot(&b"XXXX"[..]).is_err());
        let g = TorusGrid::new(1, 4).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &ScalarField::constant(&g, 1.0)).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_snapshot(&buf[..]).is_err());
    }

    #[test]
    fn csv_roundtrip_2d() {
        let g = TorusGrid::new(2, 8).unwrap();
        let f = g.sample(|x| (x[0] * 3.0).sin() + x[1]);
        let mut buf = Vec::new();
        write_csv(&mut buf, &f).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i0,i1,value\n"));
        let back = read_csv(&buf[..], &g).unwrap();
        assert_eq!(back, f);
    }

    proptest! {
        #[test]
        fn binary_trajectory_roundtrip(vals in proptest::collection::vec(-1e6f64..1e6, 16), frames in 1usize..4) {
            let g = TorusGrid::new(1, 16).unwrap();
            let fields: Vec<ScalarField> = (0..frames)
                .map(|k| ScalarField::new(&g, vals.iter().map(|v| v * k as f64).collect()).unwrap())
                .collect();
            let mut buf = Vec::new();
            write_trajectory(&mut buf, &fields).unwrap();
            prop_assert_eq!(read_trajectory(&buf[..]).unwrap(), fields);
        }
    }
}
