//! `GSEM` embedding datasets.
//!
//! ```text
//! magic "GSEM" | version u32 | dim u32 | n_samples u64 | n_classes u32 | flags u32
//! features  n·dim f64, row-major
//! labels    n u32
//! anchors   n_classes·dim f64, row-major
//! names     n_classes × (u32 length + UTF-8)
//! domain id u32 length + UTF-8
//! ```
//!
//! All integers and reals are little-endian. Flag bit 0 marks the anchors
//! as already unit-norm; without it they are normalized on load.

use std::path::Path;

use geostack_core::EmbeddingDataset;

use super::codec::{put_f64s, put_string, put_u32, put_u64, to_u32, Reader};
use super::error::{StoreError, StoreResult};
use super::{read_file, write_atomic};

pub const DATASET_MAGIC: &[u8; 4] = b"GSEM";
pub const DATASET_VERSION: u32 = 1;
pub const FLAG_ANCHORS_NORMALIZED: u32 = 1;
const HEADER_LEN: usize = 28;

pub fn encode_dataset(data: &EmbeddingDataset) -> StoreResult<Vec<u8>> {
    let d = data.dim();
    let mut out = Vec::with_capacity(
        HEADER_LEN + data.features().len() * 8 + data.len() * 4 + data.anchors().len() * 8,
    );
    out.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut out, DATASET_VERSION);
    put_u32(&mut out, to_u32(d, "dim")?);
    put_u64(&mut out, data.len() as u64);
    put_u32(&mut out, to_u32(data.n_classes(), "class count")?);
    put_u32(&mut out, FLAG_ANCHORS_NORMALIZED);
    put_f64s(&mut out, data.features());
    for &l in data.labels() {
        put_u32(&mut out, l);
    }
    put_f64s(&mut out, data.anchors());
    for name in data.class_names() {
        put_string(&mut out, name)?;
    }
    put_string(&mut out, data.domain_id())?;
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> StoreResult<EmbeddingDataset> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    r.version(DATASET_VERSION)?;
    let dim = r.u32()? as usize;
    let n = r.u64()?;
    let classes = r.u32()? as usize;
    let flags = r.u32()?;
    if dim == 0 {
        return Err(StoreError::InvalidHeader("dim must be at least 1".into()));
    }
    if flags & !FLAG_ANCHORS_NORMALIZED != 0 {
        return Err(StoreError::InvalidHeader(format!("unknown flag bits {flags:#x}")));
    }
    // n·dim reals and n labels must fit before anything is allocated
    r.require(n, dim as u64 * 8 + 4)?;
    let n = n as usize;
    let features = r.f64s(n * dim, "features")?;
    let labels = r.u32s(n)?;
    let anchors = r.f64s(classes * dim, "anchors")?;
    let mut names = Vec::with_capacity(classes.min(bytes.len()));
    for _ in 0..classes {
        names.push(r.string("class name")?);
    }
    let domain_id = r.string("domain id")?;
    r.finish()?;
    Ok(EmbeddingDataset::new(
        dim,
        features,
        labels,
        anchors,
        names,
        domain_id,
        flags & FLAG_ANCHORS_NORMALIZED != 0,
    )?)
}

pub fn save_dataset(path: impl AsRef<Path>, data: &EmbeddingDataset) -> StoreResult<()> {
    write_atomic(path.as_ref(), &encode_dataset(data)?)
}

pub fn load_dataset(path: impl AsRef<Path>) -> StoreResult<EmbeddingDataset> {
    decode_dataset(&read_file(path.as_ref())?)
}
