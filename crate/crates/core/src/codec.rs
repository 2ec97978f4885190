//! Little-endian binary encoding shared by every persisted blob.

use crate::error::ContainerError;
use crate::numerics::Matrix;

#[derive(Debug, Default)]
pub(crate) struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        self.usize(vs.len());
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn bytes(&mut self, bs: &[u8]) {
        self.usize(bs.len());
        self.buf.extend_from_slice(bs);
    }

    pub fn matrix(&mut self, m: &Matrix) {
        self.usize(m.rows());
        self.usize(m.cols());
        for &v in m.as_slice() {
            self.f64(v);
        }
    }
}

#[derive(Debug)]
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

type DecodeResult<T> = std::result::Result<T, ContainerError>;

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> DecodeResult<&'a [u8]> {
        if self.remaining() < n {
            return Err(ContainerError::Truncated);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> DecodeResult<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> DecodeResult<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> DecodeResult<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    /// Length prefix, checked against the bytes left so corrupted input
    /// cannot request huge allocations.
    pub fn len_prefix(&mut self, elem_size: usize) -> DecodeResult<usize> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| ContainerError::Truncated)?;
        if n.saturating_mul(elem_size.max(1)) > self.remaining() {
            return Err(ContainerError::Truncated);
        }
        Ok(n)
    }

    pub fn usize(&mut self) -> DecodeResult<usize> {
        usize::try_from(self.u64()?).map_err(|_| ContainerError::Malformed("length overflow".into()))
    }

    pub fn f64(&mut self) -> DecodeResult<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn f64s(&mut self) -> DecodeResult<Vec<f64>> {
        let n = self.len_prefix(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn bytes(&mut self) -> DecodeResult<&'a [u8]> {
        let n = self.len_prefix(1)?;
        self.take(n)
    }

    pub fn matrix(&mut self) -> DecodeResult<Matrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.saturating_mul(8) <= self.remaining())
            .ok_or(ContainerError::Truncated)?;
        let data = (0..n).map(|_| self.f64()).collect::<DecodeResult<Vec<_>>>()?;
        Matrix::new(rows, cols, data)
            .map_err(|e| ContainerError::Malformed(format!("matrix: {e}")))
    }

    pub fn finish(&self) -> DecodeResult<()> {
        if self.remaining() != 0 {
            return Err(ContainerError::Malformed(format!(
                "{} trailing bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}
