//! Synthetic embedding domains, experts with a prescribed orthogonality
//! error, the stress test and the λ sweep.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{GeoError, Result};
use crate::evaluation::accuracy;
use crate::geometry::orthogonality_error;
use crate::math;
use crate::matrix::UpperTriangularMatrix;
use crate::rng::{self, standard_normal};
use crate::training::{train_geolayer, EmbeddingDataset, TrainConfig};

/// Upper edge of the stable zone of normalized OE.
pub const STABLE_ZONE_MAX: f64 = 0.015;
/// Upper edge of the graceful-degradation zone of normalized OE.
pub const GRACEFUL_ZONE_MAX: f64 = 0.06;
/// Tolerance on the normalized OE hit by [`synthesize_expert_with_oe`].
pub const OE_TARGET_TOL: f64 = 1e-4;
const BISECTION_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum AnchorMode {
    #[default]
    Orthonormal,
    RandomUnit,
}

/// Recipe for a synthetic domain.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticDomainSpec {
    pub dim: usize,
    pub classes: usize,
    pub per_class: usize,
    /// Concentration: per-coordinate noise standard deviation is `1/κ`.
    /// `f64::INFINITY` gives noise-free rows.
    pub kappa: f64,
    pub anchors: AnchorMode,
    pub seed: u64,
    /// Strength of a seeded linear distortion `I + shift·G/√d` applied to
    /// the class centres, modelling a domain gap between the image and
    /// text sides. Zero puts the centres on the anchors.
    pub shift: f64,
    /// Weight ρ of a direction shared by every anchor: anchors become
    /// `√ρ·u + √(1−ρ)·a_c`, so orthonormal `a_c` give pairwise cosine ρ.
    /// Zero keeps the anchors as drawn.
    pub coherence: f64,
    pub domain_id: String,
}

impl SyntheticDomainSpec {
    pub fn new(dim: usize, classes: usize, per_class: usize, kappa: f64, seed: u64) -> Self {
        Self {
            dim,
            classes,
            per_class,
            kappa,
            anchors: AnchorMode::Orthonormal,
            seed,
            shift: 0.0,
            coherence: 0.0,
            domain_id: alloc::format!("synthetic-{seed}"),
        }
    }

    pub fn with_shift(self, shift: f64) -> Self {
        Self { shift, ..self }
    }

    pub fn with_coherence(self, coherence: f64) -> Self {
        Self { coherence, ..self }
    }

    pub fn with_anchors(self, anchors: AnchorMode) -> Self {
        Self { anchors, ..self }
    }

    pub fn with_domain_id(self, id: impl Into<String>) -> Self {
        Self {
            domain_id: id.into(),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(GeoError::InvalidDimension(0));
        }
        if self.classes < 2 {
            return Err(GeoError::InvalidInput("need at least 2 classes".into()));
        }
        if self.per_class == 0 {
            return Err(GeoError::InvalidInput("need at least 1 sample per class".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(GeoError::InvalidInput(alloc::format!(
                "kappa {} must be positive",
                self.kappa
            )));
        }
        if !self.shift.is_finite() || self.shift < 0.0 {
            return Err(GeoError::InvalidInput(alloc::format!(
                "shift {} must be finite and non-negative",
                self.shift
            )));
        }
        if !(0.0..1.0).contains(&self.coherence) {
            return Err(GeoError::InvalidInput(alloc::format!(
                "coherence {} outside [0, 1)",
                self.coherence
            )));
        }
        if self.anchors == AnchorMode::Orthonormal && self.classes > self.dim {
            return Err(GeoError::InvalidInput(alloc::format!(
                "{} orthonormal anchors do not fit in dimension {}",
                self.classes,
                self.dim
            )));
        }
        Ok(())
    }
}

fn normalize(v: &mut [f64]) {
    let n = math::norm(v);
    v.iter_mut().for_each(|x| *x /= n);
}

fn gaussian_vec(rng: &mut rng::SeededRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| standard_normal(rng)).collect()
}

fn draw_anchors(spec: &SyntheticDomainSpec, rng: &mut rng::SeededRng) -> Vec<Vec<f64>> {
    let mut anchors: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    while anchors.len() < spec.classes {
        let mut v = gaussian_vec(rng, spec.dim);
        if spec.anchors == AnchorMode::Orthonormal {
            // modified Gram–Schmidt, twice for stability
            for _ in 0..2 {
                for a in &anchors {
                    let p = math::dot(&v, a);
                    v.iter_mut().zip(a).for_each(|(x, y)| *x -= p * y);
                }
            }
        }
        if math::norm(&v) < 1e-6 {
            continue;
        }
        normalize(&mut v);
        anchors.push(v);
    }
    if spec.coherence > 0.0 {
        let shared = shared_direction(spec, &anchors);
        let (a, b) = (math::sqrt(spec.coherence), math::sqrt(1.0 - spec.coherence));
        for v in anchors.iter_mut() {
            v.iter_mut().zip(&shared).for_each(|(x, u)| *x = a * u + b * *x);
            normalize(v);
        }
    }
    anchors
}

/// Unit vector shared by all anchors, orthogonal to them when they are
/// orthonormal and leave room.
fn shared_direction(spec: &SyntheticDomainSpec, anchors: &[Vec<f64>]) -> Vec<f64> {
    let mut rng = rng::seeded(rng::derive_seed(spec.seed, 3));
    loop {
        let mut u = gaussian_vec(&mut rng, spec.dim);
        if spec.anchors == AnchorMode::Orthonormal && anchors.len() < spec.dim {
            for _ in 0..2 {
                for a in anchors {
                    let p = math::dot(&u, a);
                    u.iter_mut().zip(a).for_each(|(x, y)| *x -= p * y);
                }
            }
        }
        if math::norm(&u) >= 1e-6 {
            normalize(&mut u);
            return u;
        }
    }
}

/// Draws a labelled domain: unit anchors, and per class `per_class` rows
/// `normalize(centre + noise/κ)`.
pub fn generate_domain(spec: &SyntheticDomainSpec) -> Result<EmbeddingDataset> {
    spec.validate()?;
    let d = spec.dim;
    let mut anchor_rng = rng::seeded(rng::derive_seed(spec.seed, 0));
    let mut shift_rng = rng::seeded(rng::derive_seed(spec.seed, 1));
    let mut noise_rng = rng::seeded(rng::derive_seed(spec.seed, 2));

    let anchors = draw_anchors(spec, &mut anchor_rng);
    let centres: Vec<Vec<f64>> = if spec.shift == 0.0 {
        anchors.clone()
    } else {
        let g = gaussian_vec(&mut shift_rng, d * d);
        let scale = spec.shift / math::sqrt(d as f64);
        anchors
            .iter()
            .map(|a| {
                // a·(I + scale·G)
                let mut c = a.clone();
                for (k, &ak) in a.iter().enumerate() {
                    for (cj, gkj) in c.iter_mut().zip(&g[k * d..(k + 1) * d]) {
                        *cj += scale * ak * gkj;
                    }
                }
                normalize(&mut c);
                c
            })
            .collect()
    };

    let noise_scale = if spec.kappa.is_infinite() {
        0.0
    } else {
        1.0 / spec.kappa
    };
    let mut features = Vec::with_capacity(spec.classes * spec.per_class * d);
    let mut labels = Vec::with_capacity(spec.classes * spec.per_class);
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..spec.per_class {
            let mut row = centre.clone();
            if noise_scale > 0.0 {
                for x in row.iter_mut() {
                    *x += noise_scale * standard_normal(&mut noise_rng);
                }
                normalize(&mut row);
            }
            features.extend_from_slice(&row);
            labels.push(c as u32);
        }
    }
    let names = (0..spec.classes).map(|c| alloc::format!("class-{c}")).collect();
    EmbeddingDataset::new(
        d,
        features,
        labels,
        anchors.into_iter().flatten().collect(),
        names,
        spec.domain_id.clone(),
        true,
    )
}

/// Seeded random upper-triangular direction (diagonal included) with unit
/// Frobenius norm.
pub fn expert_direction(dim: usize, seed: u64) -> Result<UpperTriangularMatrix> {
    let mut rng = rng::seeded(seed);
    let mut q = UpperTriangularMatrix::zeros(dim)?;
    for (i, j) in UpperTriangularMatrix::upper_indices(dim) {
        q.set(i, j, standard_normal(&mut rng))?;
    }
    let n = q.frobenius_norm();
    Ok(q.scale(1.0 / n))
}

/// Normalized OE of `I + α·Q`.
pub fn oe_along(q: &UpperTriangularMatrix, alpha: f64) -> f64 {
    orthogonality_error(&q.scale(alpha).add_identity()).normalized
}

/// `I + α·Q` with `α` bisected so that the normalized OE hits `gamma`
/// within [`OE_TARGET_TOL`]. `gamma = 0` returns `I`.
pub fn synthesize_expert_with_oe(dim: usize, gamma: f64, seed: u64) -> Result<UpperTriangularMatrix> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(GeoError::Synthesis(alloc::format!(
            "target {gamma} must be finite and non-negative"
        )));
    }
    if gamma == 0.0 {
        return UpperTriangularMatrix::identity(dim);
    }
    let q = expert_direction(dim, seed)?;
    let mut lo = 0.0;
    let mut hi = 1e-3;
    let mut iters = 0;
    while oe_along(&q, hi) < gamma {
        lo = hi;
        hi *= 2.0;
        iters += 1;
        if iters >= BISECTION_ITERS {
            return Err(GeoError::Synthesis(alloc::format!(
                "could not bracket target {gamma}"
            )));
        }
    }
    let mut best = hi;
    for _ in iters..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        let s = oe_along(&q, mid);
        best = mid;
        if (s - gamma).abs() <= OE_TARGET_TOL * 1e-3 || mid == lo || mid == hi {
            break;
        }
        if s < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = q.scale(best).add_identity();
    let got = orthogonality_error(&w).normalized;
    if (got - gamma).abs() > OE_TARGET_TOL {
        return Err(GeoError::Synthesis(alloc::format!(
            "bisection reached OE {got}, target {gamma}"
        )));
    }
    Ok(w)
}

/// Stability zone of a normalized OE value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Zone {
    Stable,
    Graceful,
    Catastrophic,
}

impl Zone {
    pub fn of(normalized_oe: f64) -> Self {
        if normalized_oe < STABLE_ZONE_MAX {
            Zone::Stable
        } else if normalized_oe < GRACEFUL_ZONE_MAX {
            Zone::Graceful
        } else {
            Zone::Catastrophic
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Zone::Stable => "stable",
            Zone::Graceful => "graceful",
            Zone::Catastrophic => "catastrophic",
        }
    }
}

/// OE targets for the stress test.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StressGrid {
    gammas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl StressGrid {
    /// Targets must be finite, non-negative and strictly ascending.
    pub fn new(gammas: Vec<f64>, trials: usize, seed: u64) -> Result<Self> {
        if gammas.is_empty() {
            return Err(GeoError::InvalidInput("empty gamma grid".into()));
        }
        if trials == 0 {
            return Err(GeoError::InvalidInput("need at least one trial".into()));
        }
        if gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(GeoError::InvalidInput(
                "gamma targets must be finite and non-negative".into(),
            ));
        }
        if gammas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(GeoError::InvalidInput(
                "gamma targets must be strictly ascending".into(),
            ));
        }
        Ok(Self { gammas, trials, seed })
    }

    /// Targets spanning `[1e-5, 1.7]` with representatives of each zone.
    pub fn default_gammas() -> Vec<f64> {
        vec![1e-5, 0.005, 0.01, 0.015, 0.03, 0.06, 0.1, 0.5, 1.7]
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StressRecord {
    pub gamma: f64,
    pub mean_accuracy: f64,
    /// Population standard deviation over trials.
    pub std: f64,
    pub n: usize,
    pub zone: Zone,
}

/// Applies synthetic experts of each target OE to `domain` and aggregates
/// accuracy over trials. Trial `t` uses the same direction for every target.
pub fn stress_test(domain: &EmbeddingDataset, grid: &StressGrid) -> Result<Vec<StressRecord>> {
    if domain.is_empty() {
        return Err(GeoError::InvalidInput("empty domain".into()));
    }
    let mut out = Vec::with_capacity(grid.gammas.len());
    for &gamma in &grid.gammas {
        let mut accs = Vec::with_capacity(grid.trials);
        for t in 0..grid.trials {
            let w = synthesize_expert_with_oe(domain.dim(), gamma, rng::derive_seed(grid.seed, t as u64))?;
            accs.push(accuracy(domain, &w)?);
        }
        let n = accs.len() as f64;
        let mean = accs.iter().sum::<f64>() / n;
        let all_equal = accs.iter().all(|&a| a == accs[0]);
        let (mean, std) = if all_equal {
            (accs[0], 0.0)
        } else {
            (
                mean,
                math::sqrt(accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n),
            )
        };
        out.push(StressRecord {
            gamma,
            mean_accuracy: mean,
            std,
            n: accs.len(),
            zone: Zone::of(gamma),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRecord {
    pub lambda: f64,
    pub final_oe: f64,
    pub accuracy: f64,
}

/// Trains one expert per λ with otherwise identical settings.
pub fn lambda_sweep(
    domain: &EmbeddingDataset,
    lambdas: &[f64],
    cfg: &TrainConfig,
) -> Result<Vec<SweepRecord>> {
    if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(GeoError::InvalidConfig(alloc::format!(
            "lambda {l} outside [0, 1]"
        )));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let report = train_geolayer(domain, &cfg.with_lambda(lambda))?;
            Ok(SweepRecord {
                lambda,
                final_oe: report.layer.normalized_oe(),
                accuracy: accuracy(domain, report.layer.weight())?,
            })
        })
        .collect()
}
