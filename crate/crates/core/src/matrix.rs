//! Dense row-major matrices and the `application/x-matrix-f64` codec.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"XMATF64\0"
//! 8       4     rows   u32
//! 12      4     cols   u32
//! 16      8*r*c values f64, row-major
//! ```

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MATRIX_MEDIA_TYPE: &str = "application/x-matrix-f64";
pub const MATRIX_MAGIC: &[u8; 8] = b"XMATF64\0";
pub const MATRIX_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged matrix rows"));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.iter_rows().map(<[T]>::to_vec).collect()
    }
}

impl Matrix<f64> {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(MATRIX_MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MATRIX_HEADER_LEN || &bytes[..8] != MATRIX_MAGIC {
            return Err(Error::invalid("not an x-matrix-f64 payload"));
        }
        let rows = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let cols = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = &bytes[MATRIX_HEADER_LEN..];
        if body.len() != rows * cols * 8 {
            return Err(Error::invalid(format!(
                "x-matrix-f64 body is {} bytes, header says {rows}x{cols}",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Matrix { rows, cols, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let bytes = m.encode();
        assert_eq!(bytes.len(), 16 + 6 * 8);
        assert_eq!(&bytes[..8], b"XMATF64\0");
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[3, 0, 0, 0]);
        assert_eq!(&bytes[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[56..64], &6.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_truncated() {
        let bytes = Matrix::<f64>::zeros(3, 3).encode();
        assert!(Matrix::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(Matrix::decode(b"short").is_err());
    }

    proptest! {
        #[test]
        fn codec_round_trip(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let data: Vec<f64> = (0..rows * cols)
                .map(|i| f64::from_bits(seed.wrapping_mul(i as u64 + 1) & 0x7fef_ffff_ffff_ffff))
                .collect();
            let m = Matrix::from_vec(rows, cols, data).unwrap();
            let back = Matrix::decode(&m.encode()).unwrap();
            prop_assert_eq!(back.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!((back.rows(), back.cols()), (rows, cols));
        }
    }
}
