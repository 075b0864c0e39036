//! Little-endian primitives shared by the binary formats.

use super::error::{StoreError, StoreResult};

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> StoreResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(StoreError::Truncated {
                needed: self.pos as u64 + n as u64,
                available: self.buf.len() as u64,
            });
        };
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    /// Fails with `Truncated` up front when `count` items of `width` bytes
    /// cannot fit, before anything is allocated.
    pub fn require(&self, count: u64, width: u64) -> StoreResult<()> {
        let needed = count
            .checked_mul(width)
            .and_then(|b| b.checked_add(self.pos as u64))
            .unwrap_or(u64::MAX);
        if needed > self.buf.len() as u64 {
            return Err(StoreError::Truncated {
                needed,
                available: self.buf.len() as u64,
            });
        }
        Ok(())
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> StoreResult<()> {
        let found = self.take(4)?;
        if found != expected {
            return Err(StoreError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u32) -> StoreResult<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(StoreError::VersionMismatch { expected, found });
        }
        Ok(())
    }

    pub fn u32(&mut self) -> StoreResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> StoreResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64s(&mut self, count: usize, what: &str) -> StoreResult<Vec<f64>> {
        self.require(count as u64, 8)?;
        let bytes = self.take(count * 8)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StoreError::NonFinite(what.into()));
        }
        Ok(values)
    }

    pub fn u32s(&mut self, count: usize) -> StoreResult<Vec<u32>> {
        self.require(count as u64, 4)?;
        let bytes = self.take(count * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    /// `u32` byte length followed by UTF-8 text.
    pub fn string(&mut self, what: &str) -> StoreResult<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| StoreError::Utf8(what.into()))
    }

    pub fn finish(self) -> StoreResult<()> {
        let extra = self.buf.len() - self.pos;
        if extra > 0 {
            return Err(StoreError::TrailingBytes { extra: extra as u64 });
        }
        Ok(())
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn put_string(out: &mut Vec<u8>, s: &str) -> StoreResult<()> {
    let len =
        u32::try_from(s.len()).map_err(|_| StoreError::InvalidHeader("string longer than 4 GiB".into()))?;
    put_u32(out, len);
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub(crate) fn to_u32(v: usize, what: &str) -> StoreResult<u32> {
    u32::try_from(v).map_err(|_| StoreError::InvalidHeader(format!("{what} {v} does not fit in 32 bits")))
}
