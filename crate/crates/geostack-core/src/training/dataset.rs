use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{GeoError, Result};
use crate::math;
use crate::rng;

/// Tolerance on `‖T_c‖₂ = 1` for anchors declared already normalized.
pub const ANCHOR_NORM_TOL: f64 = 1e-6;

/// Image features, labels and one text anchor per class, all in one
/// `d`-dimensional space. Anchors are unit-norm once constructed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingDataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<u32>,
    anchors: Vec<f64>,
    class_names: Vec<String>,
    domain_id: String,
}

impl EmbeddingDataset {
    /// Validates the parts and normalizes anchors unless `anchors_normalized`
    /// is set, in which case their norms are only checked.
    pub fn new(
        dim: usize,
        features: Vec<f64>,
        labels: Vec<u32>,
        mut anchors: Vec<f64>,
        class_names: Vec<String>,
        domain_id: impl Into<String>,
        anchors_normalized: bool,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(GeoError::InvalidDimension(0));
        }
        let n = labels.len();
        if n == 0 {
            return Err(GeoError::InvalidInput("dataset has no samples".into()));
        }
        if features.len() != n * dim {
            return Err(GeoError::DimensionMismatch {
                expected: n * dim,
                found: features.len(),
            });
        }
        if !anchors.len().is_multiple_of(dim) {
            return Err(GeoError::InvalidInput(alloc::format!(
                "anchor buffer of {} values is not a multiple of dim {dim}",
                anchors.len()
            )));
        }
        let c = anchors.len() / dim;
        if c < 2 {
            return Err(GeoError::InvalidInput(alloc::format!(
                "need at least 2 classes, found {c}"
            )));
        }
        if class_names.len() != c {
            return Err(GeoError::DimensionMismatch {
                expected: c,
                found: class_names.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= c) {
            return Err(GeoError::InvalidInput(alloc::format!(
                "label {bad} has no anchor ({c} classes)"
            )));
        }
        if features.iter().chain(&anchors).any(|v| !v.is_finite()) {
            return Err(GeoError::NonFinite("dataset entries".into()));
        }
        for (k, row) in anchors.chunks_mut(dim).enumerate() {
            let norm = math::norm(row);
            if anchors_normalized {
                if (norm - 1.0).abs() > ANCHOR_NORM_TOL {
                    return Err(GeoError::InvalidInput(alloc::format!(
                        "anchor {k} has norm {norm} but is declared normalized"
                    )));
                }
            } else {
                if norm == 0.0 {
                    return Err(GeoError::InvalidInput(alloc::format!("anchor {k} is zero")));
                }
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(Self {
            dim,
            features,
            labels,
            anchors,
            class_names,
            domain_id: domain_id.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.anchors.len() / self.dim
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn label(&self, j: usize) -> usize {
        self.labels[j] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn anchor(&self, c: usize) -> &[f64] {
        &self.anchors[c * self.dim..(c + 1) * self.dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn anchors(&self) -> &[f64] {
        &self.anchors
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn domain_id(&self) -> &str {
        &self.domain_id
    }

    pub fn with_domain_id(mut self, id: impl Into<String>) -> Self {
        self.domain_id = id.into();
        self
    }

    /// Sample indices grouped by class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.n_classes()];
        for (j, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(j);
        }
        out
    }

    /// Rows at `indices`, in that order, with all anchors kept.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(GeoError::InvalidInput("empty subset".into()));
        }
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &j in indices {
            if j >= self.len() {
                return Err(GeoError::InvalidInput(alloc::format!("row {j} out of range")));
            }
            features.extend_from_slice(self.row(j));
            labels.push(self.labels[j]);
        }
        Ok(Self {
            dim: self.dim,
            features,
            labels,
            anchors: self.anchors.clone(),
            class_names: self.class_names.clone(),
            domain_id: self.domain_id.clone(),
        })
    }

    /// Rows whose label is in `classes`; anchors are kept for all classes.
    pub fn restrict_to_classes(&self, classes: &[usize]) -> Result<Self> {
        let mut keep = alloc::vec![false; self.n_classes()];
        for &c in classes {
            if c >= keep.len() {
                return Err(GeoError::InvalidInput(alloc::format!("class {c} out of range")));
            }
            keep[c] = true;
        }
        let idx: Vec<usize> = (0..self.len()).filter(|&j| keep[self.label(j)]).collect();
        if idx.is_empty() {
            return Err(GeoError::InvalidInput(alloc::format!(
                "no samples for classes {classes:?}"
            )));
        }
        self.subset(&idx)
    }
}

/// Up to `shots` samples per class drawn without replacement, returned in
/// ascending row order. Deterministic in `(data, shots, seed)`.
pub fn few_shot_indices(data: &EmbeddingDataset, shots: usize, seed: u64) -> Result<Vec<usize>> {
    if data.is_empty() {
        return Err(GeoError::InvalidInput("empty dataset".into()));
    }
    if shots == 0 {
        return Err(GeoError::InvalidConfig("shots must be at least 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut picked = Vec::new();
    for mut class_rows in data.indices_by_class() {
        if class_rows.len() > shots {
            let (chosen, _) = class_rows.partial_shuffle(&mut rng, shots);
            picked.extend_from_slice(chosen);
        } else {
            picked.append(&mut class_rows);
        }
    }
    picked.sort_unstable();
    Ok(picked)
}

pub fn few_shot_sample(data: &EmbeddingDataset, shots: usize, seed: u64) -> Result<EmbeddingDataset> {
    data.subset(&few_shot_indices(data, shots, seed)?)
}
