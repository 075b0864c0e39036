//! Expert training: data, objective, optimizer and the few-shot loop.

mod adamw;
mod config;
mod dataset;
mod loss;

use alloc::vec::Vec;

use rand::seq::SliceRandom;

pub use adamw::{adamw_step, AdamState};
pub use config::{OrthoReduction, TrainConfig, MAX_EPOCHS};
pub use dataset::{few_shot_indices, few_shot_sample, EmbeddingDataset, ANCHOR_NORM_TOL};
pub use loss::{align_loss, coa_gradient, coa_loss, ortho_gradient, ortho_loss, CoaLoss};

use crate::error::Result;
use crate::geometry::{orthogonality_error, GeoLayer, LayerMeta};
use crate::matrix::UpperTriangularMatrix;
use crate::rng;

/// Losses at the end of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch alignment loss over the epoch.
    pub align_loss: f64,
    /// Orthogonality penalty of the weights after the epoch's last step.
    pub ortho_loss: f64,
    /// `(1−λ)·align_loss + λ·f·ortho_loss`, `f` the configured reduction factor.
    pub coa_loss: f64,
    pub raw_oe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub layer: GeoLayer,
    /// Filled in by callers that have a clock; zero otherwise.
    pub wall_time_secs: f64,
}

/// Minibatches for one epoch: seeded shuffle, chunks of `batch_size`, a
/// trailing singleton dropped.
fn epoch_batches(n: usize, batch_size: usize, rng: &mut rng::SeededRng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(|c| c.to_vec())
        .collect()
}

/// Trains one expert from `W = I` on a few-shot subset of `data`.
///
/// Fully deterministic in `(data, cfg)`. With `epochs = 0` the identity
/// layer is returned.
pub fn train_geolayer(data: &EmbeddingDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let subset = few_shot_indices(data, cfg.shots, cfg.seed)?;
    let d = data.dim();
    let mut w = UpperTriangularMatrix::identity(d)?;
    let mut state = AdamState::new(d);
    let mut rng = rng::seeded(rng::derive_seed(cfg.seed, 1));
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(subset.len(), cfg.batch_size, &mut rng);
        let mut align_sum = 0.0;
        for batch in &batches {
            let idx: Vec<usize> = batch.iter().map(|&k| subset[k]).collect();
            let (loss, grad) = loss::coa_terms(&w, data, &idx, cfg, true)?;
            align_sum += loss.align;
            w = adamw_step(&mut state, &w, &grad.expect("gradient requested"), cfg)?;
        }
        let align = if batches.is_empty() {
            0.0
        } else {
            align_sum / batches.len() as f64
        };
        let raw_oe = orthogonality_error(&w).raw;
        let record = EpochRecord {
            epoch,
            align_loss: align,
            ortho_loss: raw_oe,
            coa_loss: (1.0 - cfg.lambda) * align + cfg.lambda * cfg.ortho_reduction.factor(d) * raw_oe,
            raw_oe,
        };
        log::debug!(
            "epoch {epoch}: align {:.4} ortho {:.4e} coa {:.4e}",
            record.align_loss,
            record.ortho_loss,
            record.coa_loss
        );
        records.push(record);
    }

    let meta = LayerMeta {
        domain_id: data.domain_id().into(),
        lambda: cfg.lambda,
        tau: cfg.tau,
        train_seed: cfg.seed,
        epochs_trained: cfg.epochs,
    };
    Ok(TrainReport {
        epochs: records,
        layer: GeoLayer::new(w, meta)?,
        wall_time_secs: 0.0,
    })
}
