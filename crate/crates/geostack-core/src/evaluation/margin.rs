//! Classification and margin diagnostics under a transformed embedding.

use alloc::vec::Vec;

use crate::error::{GeoError, Result};
use crate::math;
use crate::matrix::UpperTriangularMatrix;
use crate::training::EmbeddingDataset;

/// Similarity used for margins: cosine (matches classification) or raw dot
/// products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SimilarityMode {
    #[default]
    Cosine,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarginRecord {
    pub sample_id: usize,
    /// Similarity to the true anchor minus the best competing anchor.
    pub margin: f64,
    /// `margin > 0`; exact ties count as incorrect.
    pub correct: bool,
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(GeoError::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn cosine(y: &[f64], y_norm: f64, t: &[f64]) -> f64 {
    math::dot(y, t) / (y_norm * math::norm(t))
}

pub(crate) fn transform(row: &[f64], w: &UpperTriangularMatrix) -> Result<(alloc::vec::Vec<f64>, f64)> {
    check_len(w.dim(), row.len())?;
    let y = w.apply_row_vec(row);
    let n = math::norm(&y);
    if !(n > 0.0) || !n.is_finite() {
        return Err(GeoError::ClassificationUndefined);
    }
    Ok((y, n))
}

/// Argmax over `candidates` of `cos(y, T_c)`; ties go to the earliest candidate.
pub(crate) fn argmax_among<'a>(
    y: &[f64],
    y_norm: f64,
    candidates: impl Iterator<Item = (usize, &'a [f64])>,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (c, t) in candidates {
        let s = cosine(y, y_norm, t);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    best
}

/// Index of the anchor row most cosine-similar to `row·W`, lowest index on ties.
pub fn classify(row: &[f64], w: &UpperTriangularMatrix, anchors: &[f64]) -> Result<usize> {
    let d = w.dim();
    if anchors.is_empty() || !anchors.len().is_multiple_of(d) {
        return Err(GeoError::InvalidInput(alloc::format!(
            "anchor buffer of {} values does not hold rows of width {d}",
            anchors.len()
        )));
    }
    let (y, n) = transform(row, w)?;
    let (c, _) = argmax_among(&y, n, anchors.chunks_exact(d).enumerate()).expect("non-empty anchors");
    Ok(c)
}

/// `sim(row·W, t_pos) − sim(row·W, t_neg)`. With `W = I` and cosine mode this
/// is the zero-shot margin.
pub fn margin(
    row: &[f64],
    w: &UpperTriangularMatrix,
    t_pos: &[f64],
    t_neg: &[f64],
    mode: SimilarityMode,
) -> Result<f64> {
    check_len(w.dim(), t_pos.len())?;
    check_len(w.dim(), t_neg.len())?;
    match mode {
        SimilarityMode::Cosine => {
            if math::norm(t_pos) == 0.0 || math::norm(t_neg) == 0.0 {
                return Err(GeoError::InvalidInput("zero-norm anchor".into()));
            }
            let (y, n) = transform(row, w)?;
            Ok(cosine(&y, n, t_pos) - cosine(&y, n, t_neg))
        }
        SimilarityMode::Dot => {
            check_len(w.dim(), row.len())?;
            let y = w.apply_row_vec(row);
            Ok(math::dot(&y, t_pos) - math::dot(&y, t_neg))
        }
    }
}

/// Interference of a perturbation on a decision:
/// `row·Δ·t_posᵀ − row·Δ·t_negᵀ` in raw dot products.
pub fn interference(row: &[f64], delta: &UpperTriangularMatrix, t_pos: &[f64], t_neg: &[f64]) -> Result<f64> {
    margin(row, delta, t_pos, t_neg, SimilarityMode::Dot)
}

/// Margin of every row in `data` against the best competing class.
pub fn margin_records(data: &EmbeddingDataset, w: &UpperTriangularMatrix) -> Result<Vec<MarginRecord>> {
    let classes: Vec<usize> = (0..data.n_classes()).collect();
    margin_records_among(data, w, (0..data.len()).collect::<Vec<_>>().as_slice(), &classes)
}

pub(crate) fn margin_records_among(
    data: &EmbeddingDataset,
    w: &UpperTriangularMatrix,
    rows: &[usize],
    classes: &[usize],
) -> Result<Vec<MarginRecord>> {
    check_len(data.dim(), w.dim())?;
    if classes.len() < 2 {
        return Err(GeoError::InvalidInput("margins need at least two classes".into()));
    }
    rows.iter()
        .map(|&j| {
            let (y, n) = transform(data.row(j), w)?;
            let label = data.label(j);
            let pos = cosine(&y, n, data.anchor(label));
            let best_neg = classes
                .iter()
                .filter(|&&c| c != label)
                .map(|&c| cosine(&y, n, data.anchor(c)))
                .fold(f64::NEG_INFINITY, f64::max);
            let m = pos - best_neg;
            Ok(MarginRecord {
                sample_id: j,
                margin: m,
                correct: m > 0.0,
            })
        })
        .collect()
}

/// Fraction of `rows` whose prediction among `classes` equals the label.
pub(crate) fn accuracy_among(
    data: &EmbeddingDataset,
    w: &UpperTriangularMatrix,
    rows: &[usize],
    classes: &[usize],
) -> Result<f64> {
    check_len(data.dim(), w.dim())?;
    if rows.is_empty() {
        return Err(GeoError::InvalidInput("no rows to evaluate".into()));
    }
    if classes.is_empty() {
        return Err(GeoError::InvalidInput("no candidate classes".into()));
    }
    let mut hits = 0usize;
    for &j in rows {
        let (y, n) = transform(data.row(j), w)?;
        let (c, _) =
            argmax_among(&y, n, classes.iter().map(|&c| (c, data.anchor(c)))).expect("non-empty candidates");
        if c == data.label(j) {
            hits += 1;
        }
    }
    Ok(hits as f64 / rows.len() as f64)
}

/// Fraction of rows classified as their label over all anchors.
pub fn accuracy(data: &EmbeddingDataset, w: &UpperTriangularMatrix) -> Result<f64> {
    let rows: Vec<usize> = (0..data.len()).collect();
    let classes: Vec<usize> = (0..data.n_classes()).collect();
    accuracy_among(data, w, &rows, &classes)
}

/// Predicted class per row over all anchors.
pub fn predictions(data: &EmbeddingDataset, w: &UpperTriangularMatrix) -> Result<Vec<usize>> {
    check_len(data.dim(), w.dim())?;
    data.rows().map(|r| classify(r, w, data.anchors())).collect()
}

/// Per-class accuracy (`None` for classes without samples).
pub fn per_class_accuracy(data: &EmbeddingDataset, w: &UpperTriangularMatrix) -> Result<Vec<Option<f64>>> {
    let preds = predictions(data, w)?;
    let mut hits = alloc::vec![0usize; data.n_classes()];
    let mut totals = alloc::vec![0usize; data.n_classes()];
    for (j, p) in preds.iter().enumerate() {
        let l = data.label(j);
        totals[l] += 1;
        if *p == l {
            hits[l] += 1;
        }
    }
    Ok(hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect())
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
