//! `GSPJ` dense projection matrices (the head a stack is folded into).
//!
//! ```text
//! magic "GSPJ" | version u32 | rows u32 | cols u32 | rows·cols f64, row-major
//! ```

use std::path::Path;

use geostack_core::Matrix;

use super::codec::{put_f64s, put_u32, to_u32, Reader};
use super::error::{StoreError, StoreResult};
use super::{read_file, write_atomic};

pub const PROJECTION_MAGIC: &[u8; 4] = b"GSPJ";
pub const PROJECTION_VERSION: u32 = 1;

pub fn encode_projection(p: &Matrix) -> StoreResult<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + p.as_slice().len() * 8);
    out.extend_from_slice(PROJECTION_MAGIC);
    put_u32(&mut out, PROJECTION_VERSION);
    put_u32(&mut out, to_u32(p.rows(), "rows")?);
    put_u32(&mut out, to_u32(p.cols(), "cols")?);
    put_f64s(&mut out, p.as_slice());
    Ok(out)
}

pub fn decode_projection(bytes: &[u8]) -> StoreResult<Matrix> {
    let mut r = Reader::new(bytes);
    r.magic(PROJECTION_MAGIC)?;
    r.version(PROJECTION_VERSION)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    if rows == 0 || cols == 0 {
        return Err(StoreError::InvalidHeader(format!(
            "empty {rows}×{cols} projection"
        )));
    }
    r.require(rows as u64 * cols as u64, 8)?;
    let data = r.f64s(rows * cols, "projection")?;
    r.finish()?;
    Ok(Matrix::from_vec(rows, cols, data)?)
}

pub fn save_projection(path: impl AsRef<Path>, p: &Matrix) -> StoreResult<()> {
    write_atomic(path.as_ref(), &encode_projection(p)?)
}

pub fn load_projection(path: impl AsRef<Path>) -> StoreResult<Matrix> {
    decode_projection(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let p = Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, -4.0, 5e-310, 6.0]).unwrap();
        let bytes = encode_projection(&p).unwrap();
        assert_eq!(decode_projection(&bytes).unwrap(), p);
        assert_eq!(
            decode_projection(&bytes[..bytes.len() - 3]).unwrap_err().code(),
            "truncated-payload"
        );
    }
}
