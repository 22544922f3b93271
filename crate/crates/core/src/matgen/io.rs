//! Flat binary and CSV serialization of measurement matrices.
//!
//! Binary layout (all little-endian):
//!
//! | offset | size      | content                         |
//! |--------|-----------|---------------------------------|
//! | 0      | 8         | magic `SPRSMAT1`                |
//! | 8      | 8         | `u64` rows M                    |
//! | 16     | 8         | `u64` cols N                    |
//! | 24     | 8·M·N     | `f64` entries, column-major     |

use std::io::{Read, Write};

use super::{MatrixError, MeasurementMatrix};

pub const MATRIX_MAGIC: &[u8; 8] = b"SPRSMAT1";
const HEADER_LEN: u64 = 24;

pub fn write_matrix<W: Write>(d: &MeasurementMatrix, mut w: W) -> Result<(), MatrixError> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(d.rows() as u64).to_le_bytes())?;
    w.write_all(&(d.cols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * d.as_slice().len());
    for v in d.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix`]. Errors report the byte
/// offset at which the input stopped making sense.
pub fn read_matrix<R: Read>(mut r: R) -> Result<MeasurementMatrix, MatrixError> {
    let mut header = [0u8; HEADER_LEN as usize];
    let got = read_fully(&mut r, &mut header)?;
    if got < 8 || &header[..8] != MATRIX_MAGIC {
        let offset = header
            .iter()
            .zip(MATRIX_MAGIC)
            .take(got)
            .position(|(a, b)| a != b)
            .unwrap_or(got) as u64;
        return Err(MatrixError::Format {
            offset,
            reason: "bad magic, expected SPRSMAT1".into(),
        });
    }
    if got < HEADER_LEN as usize {
        return Err(MatrixError::Format {
            offset: got as u64,
            reason: "truncated header".into(),
        });
    }
    let rows = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(header[16..24].try_into().unwrap());
    if rows == 0 || cols == 0 || rows > cols {
        return Err(MatrixError::Format {
            offset: 8,
            reason: format!("invalid dimensions {rows}x{cols}"),
        });
    }
    let count = rows
        .checked_mul(cols)
        .filter(|c| c.checked_mul(8).is_some() && *c <= usize::MAX as u64)
        .ok_or_else(|| MatrixError::Format {
            offset: 8,
            reason: format!("dimensions {rows}x{cols} overflow"),
        })? as usize;
    let mut bytes = vec![0u8; count * 8];
    let got = read_fully(&mut r, &mut bytes)?;
    if got < bytes.len() {
        return Err(MatrixError::Format {
            offset: HEADER_LEN + got as u64,
            reason: format!("truncated payload, expected {} bytes of entries", bytes.len()),
        });
    }
    let mut extra = [0u8; 1];
    if read_fully(&mut r, &mut extra)? != 0 {
        return Err(MatrixError::Format {
            offset: HEADER_LEN + bytes.len() as u64,
            reason: "trailing bytes after payload".into(),
        });
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (rows, cols) = (rows as usize, cols as usize);
    MeasurementMatrix::from_column_major(rows, cols, data).map_err(|e| match e {
        MatrixError::NotNormalized { col, norm } => MatrixError::Format {
            offset: HEADER_LEN + (col * rows * 8) as u64,
            reason: format!("column {col} has norm {norm}, expected 1"),
        },
        other => other,
    })
}

/// Writes one CSV line per matrix row with round-trip exact reals.
pub fn write_matrix_csv<W: Write>(d: &MeasurementMatrix, mut w: W) -> Result<(), MatrixError> {
    let mut line = String::new();
    for i in 0..d.rows() {
        line.clear();
        for j in 0..d.cols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{:e}", d.get(i, j)));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matgen::gen_gaussian_normalized;
    use crate::seed::RngSeed;
    use proptest::prelude::*;

    fn encoded(d: &MeasurementMatrix) -> Vec<u8> {
        let mut out = Vec::new();
        write_matrix(d, &mut out).unwrap();
        out
    }

    #[test]
    fn header_layout_is_exact() {
        let d = gen_gaussian_normalized(3, 5, RngSeed(1)).unwrap();
        let bytes = encoded(&d);
        assert_eq!(bytes.len(), 24 + 8 * 15);
        assert_eq!(&bytes[..8], b"SPRSMAT1");
        assert_eq!(&bytes[8..16], &3u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &5u64.to_le_bytes());
        // second entry of the first column
        assert_eq!(&bytes[32..40], &d.get(1, 0).to_le_bytes());
    }

    #[test]
    fn errors_report_offsets() {
        let d = gen_gaussian_normalized(3, 5, RngSeed(1)).unwrap();
        let bytes = encoded(&d);

        let mut bad = bytes.clone();
        bad[3] = b'X';
        match read_matrix(&bad[..]) {
            Err(MatrixError::Format { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("{other:?}"),
        }
        match read_matrix(&bytes[..bytes.len() - 5]) {
            Err(MatrixError::Format { offset, .. }) => assert_eq!(offset, bytes.len() as u64 - 5),
            other => panic!("{other:?}"),
        }
        let mut long = bytes.clone();
        long.push(0);
        match read_matrix(&long[..]) {
            Err(MatrixError::Format { offset, .. }) => assert_eq!(offset, bytes.len() as u64),
            other => panic!("{other:?}"),
        }
        let mut scaled = bytes.clone();
        // corrupt an entry in column 2
        let at = 24 + 8 * (2 * 3 + 1);
        scaled[at..at + 8].copy_from_slice(&5.0f64.to_le_bytes());
        match read_matrix(&scaled[..]) {
            Err(MatrixError::Format { offset, .. }) => assert_eq!(offset, 24 + 8 * 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let d = gen_gaussian_normalized(3, 4, RngSeed(2)).unwrap();
        let mut out = Vec::new();
        write_matrix_csv(&d, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let parsed: Vec<f64> = lines[2].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(parsed.len(), 4);
        for (j, v) in parsed.iter().enumerate() {
            assert_eq!(v.to_bits(), d.get(2, j).to_bits());
        }
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(m in 1usize..6, extra in 0usize..6, seed in any::<u64>()) {
            let d = gen_gaussian_normalized(m, m + extra, RngSeed(seed)).unwrap();
            let back = read_matrix(&encoded(&d)[..]).unwrap();
            prop_assert_eq!(back.rows(), d.rows());
            prop_assert_eq!(back.as_slice(), d.as_slice());
        }
    }
}
