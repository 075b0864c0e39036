use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::margin::accuracy_among;
use super::mda::CompositionMode;
use crate::error::{GeoError, Result};
use crate::geometry::{orthogonality_error, GeoStack};
use crate::rng;
use crate::training::{train_geolayer, EmbeddingDataset, TrainConfig};

/// Disjoint class blocks learned one after another.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CilSchedule {
    tasks: Vec<Vec<usize>>,
    pub shots: usize,
    pub seed: u64,
}

impl CilSchedule {
    pub fn new(tasks: Vec<Vec<usize>>, shots: usize, seed: u64) -> Result<Self> {
        if tasks.is_empty() {
            return Err(GeoError::InvalidInput("schedule has no tasks".into()));
        }
        if shots == 0 {
            return Err(GeoError::InvalidConfig("shots must be at least 1".into()));
        }
        if let Some(k) = tasks.iter().position(Vec::is_empty) {
            return Err(GeoError::InvalidInput(alloc::format!("task {k} has no classes")));
        }
        let mut all: Vec<usize> = tasks.iter().flatten().copied().collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(GeoError::InvalidInput("task class sets overlap".into()));
        }
        Ok(Self { tasks, shots, seed })
    }

    /// `n_tasks` contiguous blocks over `0..n_classes`; the remainder goes to
    /// the earliest tasks.
    pub fn contiguous(n_classes: usize, n_tasks: usize, shots: usize, seed: u64) -> Result<Self> {
        let classes: Vec<usize> = (0..n_classes).collect();
        Self::from_order(&classes, n_tasks, shots, seed)
    }

    /// Like [`contiguous`](Self::contiguous) over a seeded shuffle of the classes.
    pub fn shuffled(
        n_classes: usize,
        n_tasks: usize,
        shots: usize,
        seed: u64,
        shuffle_seed: u64,
    ) -> Result<Self> {
        let mut classes: Vec<usize> = (0..n_classes).collect();
        classes.shuffle(&mut rng::seeded(shuffle_seed));
        Self::from_order(&classes, n_tasks, shots, seed)
    }

    fn from_order(classes: &[usize], n_tasks: usize, shots: usize, seed: u64) -> Result<Self> {
        if n_tasks == 0 || classes.len() < n_tasks {
            return Err(GeoError::InvalidInput(alloc::format!(
                "cannot split {} classes into {n_tasks} tasks",
                classes.len()
            )));
        }
        let base = classes.len() / n_tasks;
        let extra = classes.len() % n_tasks;
        let mut tasks = Vec::with_capacity(n_tasks);
        let mut start = 0;
        for k in 0..n_tasks {
            let len = base + usize::from(k < extra);
            tasks.push(classes[start..start + len].to_vec());
            start += len;
        }
        Self::new(tasks, shots, seed)
    }

    pub fn tasks(&self) -> &[Vec<usize>] {
        &self.tasks
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Checks the schedule against a dataset with `n_classes` classes: every
    /// class in range and the union covering all of them.
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let covered: usize = self.tasks.iter().map(Vec::len).sum();
        if let Some(&c) = self.tasks.iter().flatten().find(|&&c| c >= n_classes) {
            return Err(GeoError::InvalidInput(alloc::format!(
                "class {c} out of range for {n_classes} classes"
            )));
        }
        if covered != n_classes {
            return Err(GeoError::InvalidInput(alloc::format!(
                "schedule covers {covered} of {n_classes} classes"
            )));
        }
        Ok(())
    }
}

/// Curves recorded after each task.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CilCurves {
    /// Accuracy on all seen classes, competing among seen anchors.
    pub global_accuracy: Vec<f64>,
    /// Accuracy on task-0 classes, competing among all seen anchors.
    pub task0_retention: Vec<f64>,
    /// Normalized OE of the expert trained at each step.
    pub layer_normalized_oe: Vec<f64>,
    /// Normalized OE of the merged operator after each step.
    pub composite_normalized_oe: Vec<f64>,
}

impl CilCurves {
    /// Last minus first retention value.
    pub fn retention_decay(&self) -> f64 {
        match (self.task0_retention.first(), self.task0_retention.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

pub fn run_cil(data: &EmbeddingDataset, schedule: &CilSchedule, cfg: &TrainConfig) -> Result<CilCurves> {
    run_cil_with(data, schedule, cfg, CompositionMode::Product)
}

/// Trains one expert per task on that task's classes only, extends the
/// stack, and evaluates the merged operator.
pub fn run_cil_with(
    data: &EmbeddingDataset,
    schedule: &CilSchedule,
    cfg: &TrainConfig,
    mode: CompositionMode,
) -> Result<CilCurves> {
    schedule.validate(data.n_classes())?;
    cfg.validate()?;
    let mut stack = GeoStack::empty(data.dim())?;
    let mut seen: Vec<usize> = Vec::new();
    let rows_of = |classes: &[usize]| -> Vec<usize> {
        let mut keep = alloc::vec![false; data.n_classes()];
        classes.iter().for_each(|&c| keep[c] = true);
        (0..data.len()).filter(|&j| keep[data.label(j)]).collect()
    };
    let task0_rows = rows_of(&schedule.tasks[0]);
    if task0_rows.is_empty() {
        return Err(GeoError::InvalidInput("task 0 has no samples".into()));
    }

    let mut curves = CilCurves {
        global_accuracy: Vec::new(),
        task0_retention: Vec::new(),
        layer_normalized_oe: Vec::new(),
        composite_normalized_oe: Vec::new(),
    };
    for (k, classes) in schedule.tasks.iter().enumerate() {
        let task_data = data
            .restrict_to_classes(classes)?
            .with_domain_id(alloc::format!("{}-task{k}", data.domain_id()));
        let task_cfg = TrainConfig {
            shots: schedule.shots,
            seed: rng::derive_seed(schedule.seed, k as u64),
            ..*cfg
        };
        let report = train_geolayer(&task_data, &task_cfg)?;
        curves.layer_normalized_oe.push(report.layer.normalized_oe());
        stack.push(report.layer)?;
        seen.extend_from_slice(classes);
        seen.sort_unstable();

        let w = mode.merge(&stack)?;
        let seen_rows = rows_of(&seen);
        curves
            .global_accuracy
            .push(accuracy_among(data, &w, &seen_rows, &seen)?);
        curves
            .task0_retention
            .push(accuracy_among(data, &w, &task0_rows, &seen)?);
        curves
            .composite_normalized_oe
            .push(orthogonality_error(&w).normalized);
        log::info!(
            "task {k}: global {:.4} retention {:.4}",
            curves.global_accuracy[k],
            curves.task0_retention[k]
        );
    }
    Ok(curves)
}
