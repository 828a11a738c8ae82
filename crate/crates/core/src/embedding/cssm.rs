//! CSSM file format: precomputed embedding matrices, one per snippet.
//!
//! Layout: magic bytes `CSSM`, u32 little-endian version (= 1), u32 rows,
//! u32 cols, then rows*cols IEEE-754 f32 little-endian values in row-major
//! order.

use super::CssMatrix;
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"CSSM";
const VERSION: u32 = 1;

pub fn write_cssm(path: &Path, rows: u32, cols: u32, data: &[f32]) -> Result<()> {
    if data.len() != rows as usize * cols as usize {
        return Err(Error::format(format!(
            "payload length {} does not match {rows}x{cols}",
            data.len()
        )));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    f.write_all(&rows.to_le_bytes())?;
    f.write_all(&cols.to_le_bytes())?;
    for v in data {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a CSSM file back as (rows, cols, payload).
pub fn read_cssm(path: &Path) -> Result<(u32, u32, Vec<f32>)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)
        .map_err(|_| Error::format(format!("{}: file too short", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::format(format!("{}: bad magic", path.display())));
    }
    let version = read_u32(&mut f, path)?;
    if version != VERSION {
        return Err(Error::format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let rows = read_u32(&mut f, path)?;
    let cols = read_u32(&mut f, path)?;
    let count = (rows as u64) * (cols as u64);
    if count > (1 << 31) {
        return Err(Error::format(format!(
            "{}: dimension overflow {rows}x{cols}",
            path.display()
        )));
    }
    let mut payload = Vec::with_capacity(count as usize);
    let mut buf = [0u8; 4];
    for _ in 0..count {
        f.read_exact(&mut buf)
            .map_err(|_| Error::format(format!("{}: file too short", path.display())))?;
        payload.push(f32::from_le_bytes(buf));
    }
    if f.read(&mut buf)? != 0 {
        return Err(Error::format(format!(
            "{}: trailing data after payload",
            path.display()
        )));
    }
    Ok((rows, cols, payload))
}

fn read_u32<R: Read>(f: &mut R, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    f.read_exact(&mut buf)
        .map_err(|_| Error::format(format!("{}: file too short", path.display())))?;
    Ok(u32::from_le_bytes(buf))
}

/// Load a CSSM file and fit it to the configured (t_max, d) window,
/// warning when the stored dimensions differ.
pub fn load_css_file(path: &Path, t_max: usize, d: usize) -> Result<CssMatrix> {
    let (rows, cols, payload) = read_cssm(path)?;
    let (rows, cols) = (rows as usize, cols as usize);
    if rows != t_max || cols != d {
        log::warn!(
            "{}: stored {}x{} re-fit to {}x{}",
            path.display(),
            rows,
            cols,
            t_max,
            d
        );
    }
    let mut m = CssMatrix::zeros(t_max, d);
    let valid = rows.min(t_max);
    for r in 0..valid {
        for c in 0..cols.min(d) {
            m.set(r, c, payload[r * cols + c] as f64);
        }
    }
    m.valid_len = valid;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn small_matrix_loads_with_zero_padding() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.cssm");
        write_cssm(&path, 2, 3, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let m = load_css_file(&path, 4, 3).unwrap();
        assert_eq!(m.valid_len, 2);
        assert_eq!(m.row(0), &[0.0, 1.0, 2.0]);
        assert_eq!(m.row(1), &[3.0, 4.0, 5.0]);
        assert_eq!(m.row(2), &[0.0, 0.0, 0.0]);
        assert_eq!(m.row(3), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.cssm");
        std::fs::write(&path, b"XXXX\x01\x00\x00\x00").unwrap();
        let err = read_cssm(&path).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn short_file_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("short.cssm");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"CSSM");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes()); // only 1 of 4 values
        std::fs::write(&path, bytes).unwrap();
        let err = read_cssm(&path).unwrap_err();
        assert!(err.to_string().contains("file too short"));
    }

    #[test]
    fn roundtrip_is_bitwise_equal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let dir = tempdir().unwrap();
        let path = dir.path().join("rt.cssm");
        let data: Vec<f32> = (0..512 * 64).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
        write_cssm(&path, 512, 64, &data).unwrap();
        let (rows, cols, back) = read_cssm(&path).unwrap();
        assert_eq!((rows, cols), (512, 64));
        assert_eq!(back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn oversized_rows_are_truncated_with_valid_len_capped() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("big.cssm");
        write_cssm(&path, 6, 2, &[1.0; 12]).unwrap();
        let m = load_css_file(&path, 4, 2).unwrap();
        assert_eq!(m.valid_len, 4);
        assert_eq!(m.rows(), 4);
    }
}
