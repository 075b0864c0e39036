//! Accuracy, margins, erosion profiles and the multi-domain, incremental
//! and permutation protocols.

mod cil;
mod margin;
mod mda;

pub use cil::{run_cil, run_cil_with, CilCurves, CilSchedule};
pub use margin::{
    accuracy, classify, interference, margin, margin_records, per_class_accuracy, predictions, MarginRecord,
    SimilarityMode,
};
pub use mda::{
    permutation_orders, permutation_test, run_mda, run_mda_with, CommutatorEntry, CompositionMode,
    DomainResult, PermutationStats, StabilityReport, EXHAUSTIVE_ORDERINGS,
};

use alloc::vec::Vec;

use crate::error::{GeoError, Result};
use crate::geometry::{compose, orthogonality_error, GeoStack};
use crate::training::EmbeddingDataset;

/// One depth of an erosion profile.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErosionRecord {
    pub depth: usize,
    pub accuracy: f64,
    pub mean_margin: f64,
    pub cumulative_normalized_oe: f64,
}

/// Evaluates `base` under every prefix product `W₀…W_k` of the stack.
pub fn erosion_profile(base: &EmbeddingDataset, stack: &GeoStack) -> Result<Vec<ErosionRecord>> {
    if stack.is_empty() {
        return Err(GeoError::InvalidInput(
            "erosion profile needs a non-empty stack".into(),
        ));
    }
    if stack.dim() != base.dim() {
        return Err(GeoError::DimensionMismatch {
            expected: base.dim(),
            found: stack.dim(),
        });
    }
    let mut out = Vec::with_capacity(stack.len());
    // Prefix products are built incrementally; compose() of a prefix gives
    // the same left-to-right product.
    let mut acc = None;
    for (depth, layer) in stack.layers().iter().enumerate() {
        let w = match acc.take() {
            None => layer.weight().clone(),
            Some(prev) => crate::matrix::UpperTriangularMatrix::mul(&prev, layer.weight())?,
        };
        let records = margin_records(base, &w)?;
        out.push(ErosionRecord {
            depth,
            accuracy: accuracy(base, &w)?,
            mean_margin: margin::mean(records.iter().map(|r| r.margin)),
            cumulative_normalized_oe: orthogonality_error(&w).normalized,
        });
        acc = Some(w);
    }
    debug_assert_eq!(acc.as_ref(), Some(&compose(stack)?));
    Ok(out)
}
