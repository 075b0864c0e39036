//! Symmetric InfoNCE alignment, the orthogonality penalty, their convex
//! combination, and the analytic gradient of that combination.
//!
//! Rows are transformed as `y_j = x_j·W`, then compared to the anchor of
//! their own label by cosine similarity. With `S_jk = cos(y_j, T_{l(k)}) / τ`
//! the alignment loss is
//!
//! ```text
//! L = −1/(2N) Σ_j [ S_jj − logΣ_k exp S_jk  +  S_jj − logΣ_k exp S_kj ]
//! ```
//!
//! and the orthogonality penalty is `‖WᵀW − I‖²_F`, entering the objective
//! multiplied by the configured [`OrthoReduction`](crate::training::OrthoReduction) factor.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{GeoError, Result};
use crate::geometry::orthogonality_error;
use crate::math;
use crate::matrix::UpperTriangularMatrix;
use crate::training::{EmbeddingDataset, TrainConfig};

/// Components of the convex objective at one point. `ortho` is the raw
/// penalty; `total` applies the reduction factor to it.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoaLoss {
    pub total: f64,
    pub align: f64,
    pub ortho: f64,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(GeoError::InvalidConfig(alloc::format!(
            "tau {tau} must be positive"
        )));
    }
    Ok(())
}

fn check_dims(w: &UpperTriangularMatrix, data: &EmbeddingDataset) -> Result<()> {
    if w.dim() != data.dim() {
        return Err(GeoError::DimensionMismatch {
            expected: data.dim(),
            found: w.dim(),
        });
    }
    Ok(())
}

fn all_rows(data: &EmbeddingDataset) -> Vec<usize> {
    (0..data.len()).collect()
}

/// Alignment loss over the rows at `idx`, and optionally its gradient with
/// respect to `W` (lower triangle masked).
pub(crate) fn align_terms(
    w: &UpperTriangularMatrix,
    data: &EmbeddingDataset,
    idx: &[usize],
    tau: f64,
    want_grad: bool,
) -> Result<(f64, Option<UpperTriangularMatrix>)> {
    let d = w.dim();
    let n = idx.len();
    if n == 0 {
        return Err(GeoError::InvalidInput("empty batch".into()));
    }

    // Transformed rows, their norms and unit directions.
    let mut y = vec![0.0; n * d];
    let mut norms = vec![0.0; n];
    for (r, &j) in idx.iter().enumerate() {
        let out = &mut y[r * d..(r + 1) * d];
        w.apply_row(data.row(j), out);
        let nrm = math::norm(out);
        if !nrm.is_finite() {
            return Err(GeoError::NonFinite(alloc::format!(
                "transformed row {j} has norm {nrm}"
            )));
        }
        if nrm == 0.0 {
            return Err(GeoError::ClassificationUndefined);
        }
        norms[r] = nrm;
    }
    let u: Vec<f64> = y
        .chunks_exact(d)
        .zip(&norms)
        .flat_map(|(row, &nrm)| row.iter().map(move |v| v / nrm))
        .collect();

    // S[r][k] = cos(y_r, T_{label(k)}) / τ
    let mut s = vec![0.0; n * n];
    for r in 0..n {
        let ur = &u[r * d..(r + 1) * d];
        for (k, &jk) in idx.iter().enumerate() {
            s[r * n + k] = math::dot(ur, data.anchor(data.label(jk))) / tau;
        }
    }

    let row_lse: Vec<f64> = (0..n)
        .map(|r| math::log_sum_exp(s[r * n..(r + 1) * n].iter().copied()))
        .collect();
    let col_lse: Vec<f64> = (0..n)
        .map(|k| math::log_sum_exp((0..n).map(|r| s[r * n + k])))
        .collect();

    let mut acc = 0.0;
    for j in 0..n {
        acc += (s[j * n + j] - row_lse[j]) + (s[j * n + j] - col_lse[j]);
    }
    let loss = -acc / (2.0 * n as f64);
    if !loss.is_finite() {
        return Err(GeoError::NonFinite("alignment loss".into()));
    }
    if !want_grad {
        return Ok((loss, None));
    }

    // ∂L/∂S_rk = (P_rk + Q_rk − 2δ_rk) / (2N), with P row-softmax and Q column-softmax.
    let scale = 1.0 / (2.0 * n as f64);
    let mut grad = vec![0.0; d * d];
    let mut g_u = vec![0.0; d];
    for r in 0..n {
        g_u.iter_mut().for_each(|v| *v = 0.0);
        for (k, &jk) in idx.iter().enumerate() {
            let srk = s[r * n + k];
            let p = math::exp(srk - row_lse[r]);
            let q = math::exp(srk - col_lse[k]);
            let delta = if r == k { 2.0 } else { 0.0 };
            let coeff = scale * (p + q - delta) / tau;
            if coeff == 0.0 {
                continue;
            }
            for (gv, tv) in g_u.iter_mut().zip(data.anchor(data.label(jk))) {
                *gv += coeff * tv;
            }
        }
        // Back through u = y/‖y‖: ∂L/∂y = (g − (g·u)u)/‖y‖
        let ur = &u[r * d..(r + 1) * d];
        let gu_dot = math::dot(&g_u, ur);
        let inv = 1.0 / norms[r];
        let x = data.row(idx[r]);
        // ∂L/∂W_ab += x_a · (∂L/∂y)_b for a <= b
        for a in 0..d {
            let xa = x[a];
            if xa == 0.0 {
                continue;
            }
            let dst = &mut grad[a * d..(a + 1) * d];
            for b in a..d {
                dst[b] += xa * (g_u[b] - gu_dot * ur[b]) * inv;
            }
        }
    }
    Ok((loss, Some(UpperTriangularMatrix::from_dense(d, grad)?)))
}

/// Symmetric InfoNCE alignment of `batch·W` against the batch's class anchors.
pub fn align_loss(w: &UpperTriangularMatrix, batch: &EmbeddingDataset, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_dims(w, batch)?;
    align_terms(w, batch, &all_rows(batch), tau, false).map(|(l, _)| l)
}

/// `‖WᵀW − I‖²_F`.
pub fn ortho_loss(w: &UpperTriangularMatrix) -> f64 {
    orthogonality_error(w).raw
}

/// Gradient of [`ortho_loss`]: `4·W·(WᵀW − I)`, lower triangle masked.
pub fn ortho_gradient(w: &UpperTriangularMatrix) -> UpperTriangularMatrix {
    let d = w.dim();
    let e = w.gram_minus_identity();
    let mut grad = vec![0.0; d * d];
    for i in 0..d {
        for k in i..d {
            let wik = w.get(i, k);
            if wik == 0.0 {
                continue;
            }
            let erow = e.row(k);
            let dst = &mut grad[i * d..(i + 1) * d];
            for j in i..d {
                dst[j] += 4.0 * wik * erow[j];
            }
        }
    }
    UpperTriangularMatrix::from_dense(d, grad).expect("finite input gives finite gradient")
}

fn combine(lambda: f64, align: f64, ortho: f64) -> f64 {
    (1.0 - lambda) * align + lambda * ortho
}

pub(crate) fn coa_terms(
    w: &UpperTriangularMatrix,
    data: &EmbeddingDataset,
    idx: &[usize],
    cfg: &TrainConfig,
    want_grad: bool,
) -> Result<(CoaLoss, Option<UpperTriangularMatrix>)> {
    let lambda = cfg.lambda;
    // The alignment gradient carries zero weight at λ = 1.
    let need_align_grad = want_grad && lambda < 1.0;
    let (align, align_grad) = align_terms(w, data, idx, cfg.tau, need_align_grad)?;
    let ortho = ortho_loss(w);
    let scale = cfg.ortho_reduction.factor(w.dim());
    let loss = CoaLoss {
        total: combine(lambda, align, scale * ortho),
        align,
        ortho,
    };
    if !loss.total.is_finite() {
        return Err(GeoError::NonFinite("COA loss".into()));
    }
    if !want_grad {
        return Ok((loss, None));
    }
    let mut grad = ortho_gradient(w).scale(lambda * scale);
    if let Some(g) = align_grad {
        grad = grad.add(&g.scale(1.0 - lambda))?;
    }
    Ok((loss, Some(grad)))
}

/// `(1−λ)·align + λ·f·ortho` together with both components.
pub fn coa_loss(w: &UpperTriangularMatrix, batch: &EmbeddingDataset, cfg: &TrainConfig) -> Result<CoaLoss> {
    check_tau(cfg.tau)?;
    check_dims(w, batch)?;
    coa_terms(w, batch, &all_rows(batch), cfg, false).map(|(l, _)| l)
}

/// `∂L_COA/∂W` with strictly-lower entries exactly zero.
pub fn coa_gradient(
    w: &UpperTriangularMatrix,
    batch: &EmbeddingDataset,
    cfg: &TrainConfig,
) -> Result<UpperTriangularMatrix> {
    check_tau(cfg.tau)?;
    check_dims(w, batch)?;
    let (_, g) = coa_terms(w, batch, &all_rows(batch), cfg, true)?;
    Ok(g.expect("gradient requested"))
}
