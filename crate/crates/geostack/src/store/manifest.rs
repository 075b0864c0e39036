//! JSON stack manifests: ordered layer files with content digests.

use std::path::{Path, PathBuf};

use geostack_core::evaluation::CompositionMode;
use geostack_core::{GeoError, GeoLayer, GeoStack};
use serde::{Deserialize, Serialize};

use super::error::{StoreError, StoreResult};
use super::layer::decode_layer;
use super::{digest, read_file, write_atomic};

pub const MANIFEST_FORMAT: &str = "geostack-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// How the listed layers are merged.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StackMode {
    #[default]
    Product,
    TaskArithmetic {
        alpha: f64,
    },
}

impl From<StackMode> for CompositionMode {
    fn from(m: StackMode) -> Self {
        match m {
            StackMode::Product => CompositionMode::Product,
            StackMode::TaskArithmetic { alpha } => CompositionMode::TaskArithmetic { alpha },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths are resolved against the manifest's directory.
    pub path: PathBuf,
    pub digest: String,
}

/// Layers in stacking order: `layers[0]` is applied first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    #[serde(default)]
    pub mode: StackMode,
    pub layers: Vec<ManifestEntry>,
    #[serde(default)]
    pub folded_projection: Option<PathBuf>,
}

impl StackManifest {
    /// Digests each layer file as it currently exists on disk.
    pub fn for_files(dim: usize, files: &[PathBuf], mode: StackMode) -> StoreResult<Self> {
        let layers = files
            .iter()
            .map(|p| {
                Ok(ManifestEntry {
                    path: p.clone(),
                    digest: digest(&read_file(p)?),
                })
            })
            .collect::<StoreResult<Vec<_>>>()?;
        Ok(Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            dim,
            mode,
            layers,
            folded_projection: None,
        })
    }
}

pub fn save_manifest(path: impl AsRef<Path>, manifest: &StackManifest) -> StoreResult<()> {
    let mut json = serde_json::to_vec_pretty(manifest)?;
    json.push(b'\n');
    write_atomic(path.as_ref(), &json)
}

/// Parses a manifest, verifies every digest and loads the stack.
pub fn load_manifest(path: impl AsRef<Path>) -> StoreResult<(StackManifest, GeoStack)> {
    let path = path.as_ref();
    let manifest: StackManifest = serde_json::from_slice(&read_file(path)?)?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(StoreError::BadMagic {
            expected: MANIFEST_FORMAT.into(),
            found: manifest.format,
        });
    }
    if manifest.version != MANIFEST_VERSION {
        return Err(StoreError::VersionMismatch {
            expected: MANIFEST_VERSION,
            found: manifest.version,
        });
    }
    let base = path.parent().unwrap_or(Path::new(""));
    let mut stack = GeoStack::empty(manifest.dim)?;
    for entry in &manifest.layers {
        let file = base.join(&entry.path);
        let bytes = read_file(&file)?;
        let found = digest(&bytes);
        if found != entry.digest {
            return Err(StoreError::DigestMismatch {
                path: file,
                expected: entry.digest.clone(),
                found,
            });
        }
        let layer: GeoLayer = decode_layer(&bytes)?;
        if layer.dim() != manifest.dim {
            return Err(GeoError::DimensionMismatch {
                expected: manifest.dim,
                found: layer.dim(),
            }
            .into());
        }
        stack.push(layer)?;
    }
    Ok((manifest, stack))
}
