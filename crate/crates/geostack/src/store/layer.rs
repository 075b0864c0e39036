//! `GSLY` layer files.
//!
//! ```text
//! magic "GSLY" | version u32 | dim u32
//! upper triangle  d(d+1)/2 f64, row-major
//! metadata        u32 length + UTF-8 JSON
//! ```

use std::path::Path;

use geostack_core::geometry::{orthogonality_error, LayerMeta};
use geostack_core::matrix::packed_len;
use geostack_core::{GeoLayer, UpperTriangularMatrix};
use serde::{Deserialize, Serialize};

use super::codec::{put_f64s, put_string, put_u32, to_u32, Reader};
use super::error::{StoreError, StoreResult};
use super::{read_file, write_atomic};

pub const LAYER_MAGIC: &[u8; 4] = b"GSLY";
pub const LAYER_VERSION: u32 = 1;
/// Largest accepted gap between stored and recomputed raw OE.
pub const OE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFileMeta {
    domain_id: String,
    lambda: f64,
    tau: f64,
    seed: u64,
    raw_oe: f64,
    epochs: usize,
}

pub fn encode_layer(layer: &GeoLayer) -> StoreResult<Vec<u8>> {
    let d = layer.dim();
    let meta = layer.meta();
    let json = serde_json::to_string(&LayerFileMeta {
        domain_id: meta.domain_id.clone(),
        lambda: meta.lambda,
        tau: meta.tau,
        seed: meta.train_seed,
        raw_oe: layer.raw_oe(),
        epochs: meta.epochs_trained,
    })?;
    let mut out = Vec::with_capacity(12 + packed_len(d) * 8 + 4 + json.len());
    out.extend_from_slice(LAYER_MAGIC);
    put_u32(&mut out, LAYER_VERSION);
    put_u32(&mut out, to_u32(d, "dim")?);
    put_f64s(&mut out, &layer.weight().to_packed());
    put_string(&mut out, &json)?;
    Ok(out)
}

pub fn decode_layer(bytes: &[u8]) -> StoreResult<GeoLayer> {
    let mut r = Reader::new(bytes);
    r.magic(LAYER_MAGIC)?;
    r.version(LAYER_VERSION)?;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(StoreError::InvalidHeader("dim must be at least 1".into()));
    }
    r.require(packed_len(dim) as u64, 8)?;
    let packed = r.f64s(packed_len(dim), "weights")?;
    let json = r.string("metadata")?;
    r.finish()?;
    let meta: LayerFileMeta = serde_json::from_str(&json)?;
    if !meta.raw_oe.is_finite() {
        return Err(StoreError::NonFinite("metadata raw_oe".into()));
    }
    let weight = UpperTriangularMatrix::from_packed(dim, &packed)?;
    let recomputed = orthogonality_error(&weight).raw;
    if (recomputed - meta.raw_oe).abs() > OE_TOLERANCE * meta.raw_oe.abs().max(1.0) {
        return Err(StoreError::OeMismatch {
            stored: meta.raw_oe,
            recomputed,
        });
    }
    Ok(GeoLayer::new(
        weight,
        LayerMeta {
            domain_id: meta.domain_id,
            lambda: meta.lambda,
            tau: meta.tau,
            train_seed: meta.seed,
            epochs_trained: meta.epochs,
        },
    )?)
}

pub fn save_layer(path: impl AsRef<Path>, layer: &GeoLayer) -> StoreResult<()> {
    write_atomic(path.as_ref(), &encode_layer(layer)?)
}

pub fn load_layer(path: impl AsRef<Path>) -> StoreResult<GeoLayer> {
    decode_layer(&read_file(path.as_ref())?)
}
