//! Bit-exact persistence: datasets, layers, projections, stack manifests
//! and reports. Every inconsistency found on load is a typed error; nothing
//! is repaired silently.

mod codec;
mod dataset;
mod error;
mod layer;
mod manifest;
mod projection;
mod report;

use std::hash::Hasher;
use std::io::Write;
use std::path::Path;

pub use dataset::{
    decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION,
};
pub use error::{StoreError, StoreResult};
pub use layer::{
    decode_layer, encode_layer, load_layer, save_layer, LAYER_MAGIC, LAYER_VERSION, OE_TOLERANCE,
};
pub use manifest::{load_manifest, save_manifest, ManifestEntry, StackManifest, StackMode};
pub use projection::{decode_projection, encode_projection, load_projection, save_projection};
pub use report::{render_report, write_report, ReportFormat};

/// 64-bit FNV-1a over `bytes`, as `fnv1a64:` plus 16 hex digits.
pub fn digest(bytes: &[u8]) -> String {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    format!("fnv1a64:{:016x}", h.finish())
}

pub(crate) fn read_file(path: &Path) -> StoreResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| StoreError::io(path, e))
}

/// Writes to a temporary file in the target directory, then renames it
/// over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> StoreResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| StoreError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| StoreError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| StoreError::io(path, e))?;
    tmp.persist(path).map_err(|e| StoreError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(digest(b""), "fnv1a64:cbf29ce484222325");
        assert_eq!(digest(b"a"), "fnv1a64:af63dc4c8601ec8c");
    }
}
