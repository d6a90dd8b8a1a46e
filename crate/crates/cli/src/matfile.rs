//! Binary matrix files and CSV import.
//!
//! Layout: the 8-byte magic `RPMATX01`, then `rows` and `cols` as
//! little-endian `u64`, then `rows * cols` little-endian `f64` values in
//! column-major order. Nothing may follow the payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ridgepath::DenseMatrix;

use crate::CliError;

pub const MAGIC: &[u8; 8] = b"RPMATX01";
const HEADER_LEN: usize = 24;

pub fn write_matrix<W: Write>(m: &DenseMatrix, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

/// Parses a complete file image. `origin` only labels error messages.
pub fn read_matrix_bytes(bytes: &[u8], origin: &str) -> Result<DenseMatrix, CliError> {
    let bad = |msg: String| CliError::BadFormat(format!("{origin}: {msg}"));
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("magic mismatch".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(8), word(16));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| bad(format!("{rows}x{cols} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(bad(format!(
            "header says {rows}x{cols} ({expected} bytes) but payload has {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DenseMatrix::new(rows as usize, cols as usize, data).map_err(|e| bad(e.to_string()))
}

pub fn save(m: &DenseMatrix, path: &Path) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_matrix(m, BufWriter::new(f)).map_err(|e| CliError::io(path, e))
}

/// Loads a binary matrix file, or a CSV file with a header row when the
/// extension is `.csv`.
pub fn load(path: &Path) -> Result<DenseMatrix, CliError> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    if is_csv {
        return read_csv(BufReader::new(f), &path.display().to_string());
    }
    let mut bytes = Vec::new();
    BufReader::new(f)
        .read_to_end(&mut bytes)
        .map_err(|e| CliError::io(path, e))?;
    read_matrix_bytes(&bytes, &path.display().to_string())
}

/// Comma-delimited, one header row, `.` decimal separator.
pub fn read_csv<R: Read>(r: R, origin: &str) -> Result<DenseMatrix, CliError> {
    let bad = |msg: String| CliError::BadFormat(format!("{origin}: {msg}"));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let cols = reader.headers().map_err(|e| bad(e.to_string()))?.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field
                    .parse::<f64>()
                    .map_err(|_| bad(format!("row {}, column {}: '{field}' is not a number", i + 1, j + 1)))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(DenseMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Flattens a single-column or single-row matrix.
pub fn as_vector(m: &DenseMatrix, what: &str) -> Result<Vec<f64>, CliError> {
    if m.cols() == 1 || m.rows() == 1 {
        Ok(m.as_slice().to_vec())
    } else {
        Err(CliError::BadFormat(format!(
            "{what} must be a vector, got {}x{}",
            m.rows(),
            m.cols()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes_of(m: &DenseMatrix) -> Vec<u8> {
        let mut b = Vec::new();
        write_matrix(m, &mut b).unwrap();
        b
    }

    #[test]
    fn header_layout() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        let b = bytes_of(&m);
        assert_eq!(&b[..8], b"RPMATX01");
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 2);
        // Column-major: second payload value is row 1 of column 0.
        assert_eq!(f64::from_le_bytes(b[32..40].try_into().unwrap()), 3.0);
        assert_eq!(b.len(), 24 + 6 * 8);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let vals = [0.1, -0.0, f64::MIN_POSITIVE, 1e300, -7.25, f64::EPSILON];
        let m = DenseMatrix::new(2, 3, vals.to_vec()).unwrap();
        let back = read_matrix_bytes(&bytes_of(&m), "mem").unwrap();
        let bits = |m: &DenseMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
        assert_eq!((back.rows(), back.cols()), (2, 3));
    }

    #[test]
    fn empty_matrix_roundtrips() {
        let m = DenseMatrix::zeros(0, 4);
        let back = read_matrix_bytes(&bytes_of(&m), "mem").unwrap();
        assert_eq!((back.rows(), back.cols()), (0, 4));
    }

    #[test]
    fn rejects_bad_magic() {
        let mut b = bytes_of(&DenseMatrix::identity(2));
        b[7] = b'2';
        let err = read_matrix_bytes(&b, "mem").unwrap_err();
        assert!(matches!(err, CliError::BadFormat(ref s) if s.contains("magic")));
    }

    #[test]
    fn rejects_length_mismatch() {
        let mut b = bytes_of(&DenseMatrix::identity(2));
        b.pop();
        assert!(matches!(read_matrix_bytes(&b, "mem"), Err(CliError::BadFormat(_))));
        let mut b = bytes_of(&DenseMatrix::identity(2));
        b.extend_from_slice(&[0; 8]);
        assert!(matches!(read_matrix_bytes(&b, "mem"), Err(CliError::BadFormat(_))));
        assert!(matches!(read_matrix_bytes(b"RPMATX01", "mem"), Err(CliError::BadFormat(_))));
    }

    #[test]
    fn rejects_overflowing_header() {
        let mut b = MAGIC.to_vec();
        b.extend_from_slice(&u64::MAX.to_le_bytes());
        b.extend_from_slice(&2u64.to_le_bytes());
        assert!(matches!(read_matrix_bytes(&b, "mem"), Err(CliError::BadFormat(_))));
    }

    #[test]
    fn csv_fixture() {
        let text = "a,b\n1,2\n3.5, -4e-1\n0,1e3\n";
        let m = read_csv(text.as_bytes(), "mem").unwrap();
        let want = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.5, -0.4], &[0.0, 1000.0]]).unwrap();
        assert_eq!(m, want);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(read_csv("a,b\n1,x\n".as_bytes(), "mem"), Err(CliError::BadFormat(_))));
        assert!(matches!(read_csv("a,b\n1,2,3\n".as_bytes(), "mem"), Err(CliError::BadFormat(_))));
    }

    #[test]
    fn vectors() {
        let col = DenseMatrix::column_vector(&[1.0, 2.0]).unwrap();
        assert_eq!(as_vector(&col, "y").unwrap(), vec![1.0, 2.0]);
        assert!(as_vector(&DenseMatrix::identity(2), "y").is_err());
    }
}
