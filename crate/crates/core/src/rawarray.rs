//! Little-endian raw arrays with a fixed 16-byte header.
//!
//! | offset | size | field                               |
//! |--------|------|-------------------------------------|
//! | 0      | 4    | magic `SBRA`                        |
//! | 4      | 1    | dtype: 1 = u8, 2 = i32, 3 = f32     |
//! | 5      | 1    | rank, 1 to 4                        |
//! | 6      | 2    | reserved, zero                      |
//! | 8      | 8    | four u16 dims, unused trailing = 0  |
//!
//! The payload follows immediately, row-major, with no padding.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SBRA";
pub const HEADER_LEN: usize = 16;
pub const MAX_RANK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    U8 = 1,
    I32 = 2,
    F32 = 3,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::I32 | DType::F32 => 4,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::U8),
            2 => Some(DType::I32),
            3 => Some(DType::F32),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawArray {
    pub dtype: DType,
    pub dims: Vec<usize>,
    /// Little-endian payload bytes.
    pub bytes: Vec<u8>,
}

impl RawArray {
    fn checked(dtype: DType, dims: &[usize], bytes: Vec<u8>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(Error::InvalidArgument(format!(
                "rank {} not in 1..=4",
                dims.len()
            )));
        }
        if let Some(d) = dims.iter().find(|d| **d > usize::from(u16::MAX)) {
            return Err(Error::InvalidArgument(format!(
                "dimension {d} exceeds 65535"
            )));
        }
        let expected = dims.iter().product::<usize>() * dtype.size();
        if bytes.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "payload of {} bytes does not match dims {dims:?}",
                bytes.len()
            )));
        }
        Ok(Self {
            dtype,
            dims: dims.to_vec(),
            bytes,
        })
    }

    pub fn from_u8(dims: &[usize], data: &[u8]) -> Result<Self> {
        Self::checked(DType::U8, dims, data.to_vec())
    }

    pub fn from_i32(dims: &[usize], data: &[i32]) -> Result<Self> {
        Self::checked(
            DType::I32,
            dims,
            data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        )
    }

    pub fn from_f32(dims: &[usize], data: &[f32]) -> Result<Self> {
        Self::checked(
            DType::F32,
            dims,
            data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn expect(&self, dtype: DType) -> Result<()> {
        if self.dtype == dtype {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "array holds {:?}, requested {dtype:?}",
                self.dtype
            )))
        }
    }

    pub fn as_u8(&self) -> Result<&[u8]> {
        self.expect(DType::U8)?;
        Ok(&self.bytes)
    }

    pub fn to_i32(&self) -> Result<Vec<i32>> {
        self.expect(DType::I32)?;
        Ok(self
            .bytes
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn to_f32(&self) -> Result<Vec<f32>> {
        self.expect(DType::F32)?;
        Ok(self
            .bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    /// Bytes of the `i`-th slice along the leading axis.
    pub fn slice_bytes(&self, i: usize) -> &[u8] {
        let stride = self.dims[1..].iter().product::<usize>() * self.dtype.size();
        &self.bytes[i * stride..(i + 1) * stride]
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.bytes.len());
        out.extend_from_slice(&MAGIC);
        out.push(self.dtype as u8);
        out.push(self.dims.len() as u8);
        out.extend_from_slice(&[0, 0]);
        for k in 0..MAX_RANK {
            let d = self.dims.get(k).copied().unwrap_or(0) as u16;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidArgument(format!("raw array: {msg}"));
        if buf.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        if buf[0..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let dtype = DType::from_code(buf[4]).ok_or_else(|| bad("unknown dtype"))?;
        let rank = usize::from(buf[5]);
        if rank == 0 || rank > MAX_RANK {
            return Err(bad("bad rank"));
        }
        let dims: Vec<usize> = (0..rank)
            .map(|k| usize::from(u16::from_le_bytes([buf[8 + 2 * k], buf[9 + 2 * k]])))
            .collect();
        Self::checked(dtype, &dims, buf[HEADER_LEN..].to_vec())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path)?;
        Self::decode(&buf).map_err(|e| Error::dataset(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_sixteen_bytes() {
        let a = RawArray::from_f32(&[2, 3], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let enc = a.encode();
        assert_eq!(&enc[0..4], b"SBRA");
        assert_eq!(enc[4], 3);
        assert_eq!(enc[5], 2);
        assert_eq!(&enc[8..16], &[2, 0, 3, 0, 0, 0, 0, 0]);
        assert_eq!(enc.len(), 16 + 24);
        assert_eq!(RawArray::decode(&enc).unwrap(), a);
    }

    #[test]
    fn bitwise_round_trip() {
        let v = [f32::MIN_POSITIVE, -0.0, 1.0e-30, 3.25, f32::MAX];
        let a = RawArray::from_f32(&[5], &v).unwrap();
        let back = RawArray::decode(&a.encode()).unwrap().to_f32().unwrap();
        for (x, y) in v.iter().zip(&back) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let s = RawArray::from_i32(&[1, 3], &[-1, 0, 103]).unwrap();
        assert_eq!(
            RawArray::decode(&s.encode()).unwrap().to_i32().unwrap(),
            vec![-1, 0, 103]
        );
    }

    #[test]
    fn rejects_malformed() {
        assert!(RawArray::from_u8(&[2, 2], &[1, 2, 3]).is_err());
        assert!(RawArray::from_u8(&[70000], &[]).is_err());
        assert!(RawArray::from_u8(&[1, 1, 1, 1, 1], &[0]).is_err());
        let mut enc = RawArray::from_u8(&[2], &[1, 2]).unwrap().encode();
        enc[0] = b'X';
        assert!(RawArray::decode(&enc).is_err());
        assert!(RawArray::from_u8(&[2], &[1, 2]).unwrap().to_f32().is_err());
    }
}
