use crate::error::{GeoError, Result};

/// Upper bound on the number of training epochs.
pub const MAX_EPOCHS: usize = 50;

/// Scaling of `‖WᵀW − I‖²_F` inside the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum OrthoReduction {
    /// The raw squared Frobenius norm.
    Sum,
    /// Divided by `d`. Keeps the balance between the two terms roughly
    /// independent of the embedding width.
    #[default]
    PerRow,
    /// Divided by `d²`, i.e. the squared normalized OE.
    PerEntry,
}

impl OrthoReduction {
    pub fn factor(&self, dim: usize) -> f64 {
        let d = dim as f64;
        match self {
            OrthoReduction::Sum => 1.0,
            OrthoReduction::PerRow => 1.0 / d,
            OrthoReduction::PerEntry => 1.0 / (d * d),
        }
    }
}

/// Optimizer and few-shot protocol settings for one expert.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the orthogonality term in the convex objective.
    pub lambda: f64,
    /// Softmax temperature of the contrastive term.
    pub tau: f64,
    pub shots: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub ortho_reduction: OrthoReduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 30,
            lambda: 0.95,
            tau: 0.07,
            shots: 16,
            seed: 0,
            weight_decay: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            ortho_reduction: OrthoReduction::PerRow,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(GeoError::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(alloc::format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad(alloc::format!("tau {} must be positive", self.tau));
        }
        if self.shots == 0 {
            return bad("shots must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(alloc::format!(
                "batch size {} leaves no negatives",
                self.batch_size
            ));
        }
        if self.epochs > MAX_EPOCHS {
            return bad(alloc::format!(
                "epochs {} above maximum {MAX_EPOCHS}",
                self.epochs
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(alloc::format!(
                "learning rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(alloc::format!(
                "weight decay {} must be non-negative",
                self.weight_decay
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam eps must be positive".into());
        }
        Ok(())
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_epochs(self, epochs: usize) -> Self {
        Self { epochs, ..self }
    }

    pub fn with_learning_rate(self, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..self
        }
    }
}
