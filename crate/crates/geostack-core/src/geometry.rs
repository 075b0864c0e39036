//! Domain experts, stacks, folding and the orthogonality diagnostics.
//!
//! Stack order: `layers[0]` is the base and sits leftmost in the product,
//! so an embedding row `x` is transformed as `x·W₀·W₁·…·Wₙ₋₁`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{GeoError, Result};
use crate::math;
use crate::matrix::{Matrix, UpperTriangularMatrix};

/// Default relative tolerance for [`spectral_norm`].
pub const SPECTRAL_TOL: f64 = 1e-9;
/// Default iteration cap for [`spectral_norm`].
pub const SPECTRAL_MAX_ITERS: usize = 10_000;
/// Diagonal magnitude below which a layer is reported as near-singular.
pub const NEAR_SINGULAR: f64 = 1e-8;

/// Projection head `P` (`d′×d`); folding produces `P·∏Wₖ`.
pub type Projection = Matrix;

/// Raw and normalized orthogonality error of an operator.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OrthogonalityError {
    /// `‖WᵀW − I‖²_F`
    pub raw: f64,
    /// `sqrt(raw) / d`
    pub normalized: f64,
}

/// `‖WᵀW − I‖²_F` and its dimension-normalized root.
pub fn orthogonality_error(w: &UpperTriangularMatrix) -> OrthogonalityError {
    let raw: f64 = w.gram_minus_identity().as_slice().iter().map(|v| v * v).sum();
    OrthogonalityError {
        raw,
        normalized: math::sqrt(raw) / w.dim() as f64,
    }
}

pub fn identity(dim: usize) -> Result<UpperTriangularMatrix> {
    UpperTriangularMatrix::identity(dim)
}

/// `Δ = W − I`.
pub fn perturbation(w: &UpperTriangularMatrix) -> UpperTriangularMatrix {
    w.sub_identity()
}

/// Provenance recorded alongside a trained operator.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerMeta {
    pub domain_id: String,
    pub lambda: f64,
    pub tau: f64,
    pub train_seed: u64,
    pub epochs_trained: usize,
}

impl LayerMeta {
    pub fn untrained(domain_id: impl Into<String>) -> Self {
        Self {
            domain_id: domain_id.into(),
            lambda: 0.0,
            tau: 0.07,
            train_seed: 0,
            epochs_trained: 0,
        }
    }
}

/// One domain expert: an upper-triangular operator plus its provenance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeoLayer {
    weight: UpperTriangularMatrix,
    meta: LayerMeta,
    oe: OrthogonalityError,
}

impl GeoLayer {
    /// Wraps an operator, measuring its orthogonality error.
    ///
    /// A zero diagonal entry is rejected; entries smaller than
    /// [`NEAR_SINGULAR`] only log a warning.
    pub fn new(weight: UpperTriangularMatrix, meta: LayerMeta) -> Result<Self> {
        for (i, v) in weight.diagonal().enumerate() {
            if v == 0.0 {
                return Err(GeoError::InvalidInput(alloc::format!(
                    "diagonal entry {i} of layer '{}' is zero",
                    meta.domain_id
                )));
            }
            if v.abs() < NEAR_SINGULAR {
                log::warn!(
                    "layer '{}' is near-singular: |w[{i}][{i}]| = {:e}",
                    meta.domain_id,
                    v.abs()
                );
            }
        }
        if !(0.0..=1.0).contains(&meta.lambda) {
            return Err(GeoError::InvalidInput(alloc::format!(
                "lambda {} outside [0, 1]",
                meta.lambda
            )));
        }
        if !(meta.tau > 0.0) {
            return Err(GeoError::InvalidInput(alloc::format!(
                "tau {} must be positive",
                meta.tau
            )));
        }
        let oe = orthogonality_error(&weight);
        Ok(Self { weight, meta, oe })
    }

    pub fn identity(dim: usize, domain_id: impl Into<String>) -> Result<Self> {
        Self::new(
            UpperTriangularMatrix::identity(dim)?,
            LayerMeta::untrained(domain_id),
        )
    }

    pub fn weight(&self) -> &UpperTriangularMatrix {
        &self.weight
    }

    pub fn meta(&self) -> &LayerMeta {
        &self.meta
    }

    pub fn domain_id(&self) -> &str {
        &self.meta.domain_id
    }

    pub fn dim(&self) -> usize {
        self.weight.dim()
    }

    pub fn raw_oe(&self) -> f64 {
        self.oe.raw
    }

    pub fn normalized_oe(&self) -> f64 {
        self.oe.normalized
    }

    pub fn orthogonality_error(&self) -> OrthogonalityError {
        self.oe
    }

    pub fn perturbation(&self) -> UpperTriangularMatrix {
        perturbation(&self.weight)
    }
}

/// Ordered composition of layers sharing one dimension. Empty means identity.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoStack {
    dim: usize,
    layers: Vec<GeoLayer>,
}

impl GeoStack {
    pub fn empty(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(GeoError::InvalidDimension(dim));
        }
        Ok(Self {
            dim,
            layers: Vec::new(),
        })
    }

    /// Builds a stack from a non-empty layer list; dims must agree.
    pub fn from_layers(layers: Vec<GeoLayer>) -> Result<Self> {
        let dim = layers
            .first()
            .map(GeoLayer::dim)
            .ok_or_else(|| GeoError::InvalidInput("stack needs at least one layer".into()))?;
        let mut stack = Self::empty(dim)?;
        for layer in layers {
            stack.push(layer)?;
        }
        Ok(stack)
    }

    pub fn push(&mut self, layer: GeoLayer) -> Result<()> {
        if layer.dim() != self.dim {
            return Err(GeoError::DimensionMismatch {
                expected: self.dim,
                found: layer.dim(),
            });
        }
        self.layers.push(layer);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[GeoLayer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Reorders layers: `order[k]` names the layer placed at position `k`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.len())?;
        Ok(Self {
            dim: self.dim,
            layers: order.iter().map(|&i| self.layers[i].clone()).collect(),
        })
    }

    /// Stack of the first `len` layers.
    pub fn prefix(&self, len: usize) -> Self {
        Self {
            dim: self.dim,
            layers: self.layers[..len.min(self.len())].to_vec(),
        }
    }
}

pub(crate) fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(GeoError::DimensionMismatch {
            expected: n,
            found: order.len(),
        });
    }
    let mut seen = alloc::vec![false; n];
    for &i in order {
        if i >= n || seen[i] {
            return Err(GeoError::InvalidInput(alloc::format!(
                "order {order:?} is not a permutation of 0..{n}"
            )));
        }
        seen[i] = true;
    }
    Ok(())
}

/// `∏ₖ Wₖ` in stack order. The empty stack composes to `I`; a singleton
/// returns its weight unchanged.
pub fn compose(stack: &GeoStack) -> Result<UpperTriangularMatrix> {
    let mut layers = stack.layers.iter();
    let Some(first) = layers.next() else {
        return UpperTriangularMatrix::identity(stack.dim);
    };
    let mut acc = first.weight.clone();
    for layer in layers {
        acc = acc.mul(&layer.weight)?;
    }
    Ok(acc)
}

/// Additive (task-arithmetic) merge `I + α·ΣΔᵢ`.
pub fn task_arithmetic(stack: &GeoStack, alpha: f64) -> Result<UpperTriangularMatrix> {
    let mut sum = UpperTriangularMatrix::zeros(stack.dim)?;
    for layer in &stack.layers {
        sum = sum.add(&layer.perturbation())?;
    }
    Ok(sum.scale(alpha).add_identity())
}

/// First-order approximation `I + ΣΔᵢ` and its Frobenius distance to the
/// true product.
pub fn quasi_additive_approx(stack: &GeoStack) -> Result<(UpperTriangularMatrix, f64)> {
    if stack.is_empty() {
        return Err(GeoError::InvalidInput(
            "quasi-additive approximation needs a non-empty stack".into(),
        ));
    }
    let approx = task_arithmetic(stack, 1.0)?;
    let deviation = compose(stack)?.sub(&approx)?.frobenius_norm();
    Ok((approx, deviation))
}

/// `‖W_aW_b − W_bW_a‖_F`.
pub fn commutator_deviation(a: &GeoLayer, b: &GeoLayer) -> Result<f64> {
    let ab = a.weight.mul(&b.weight)?;
    let ba = b.weight.mul(&a.weight)?;
    Ok(ab.sub(&ba)?.frobenius_norm())
}

/// Commutator deviation for every unordered layer pair `(i, j)`, `i < j`.
pub fn pairwise_commutators(stack: &GeoStack) -> Result<Vec<(usize, usize, f64)>> {
    let layers = stack.layers();
    let mut out = Vec::new();
    for i in 0..layers.len() {
        for j in i + 1..layers.len() {
            out.push((i, j, commutator_deviation(&layers[i], &layers[j])?));
        }
    }
    Ok(out)
}

/// `P_eff = P·∏Wₖ`. An empty stack returns `P` untouched.
pub fn fold(p: &Projection, stack: &GeoStack) -> Result<Projection> {
    if p.cols() != stack.dim {
        return Err(GeoError::DimensionMismatch {
            expected: stack.dim,
            found: p.cols(),
        });
    }
    if stack.is_empty() {
        return Ok(p.clone());
    }
    p.mul_upper(&compose(stack)?)
}

/// Largest singular value by power iteration on `MᵀM`.
///
/// Starts from the normalized all-ones vector and stops when successive
/// estimates agree to `tol` relative.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iters: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(GeoError::InvalidConfig(alloc::format!(
            "tol {tol} must be positive"
        )));
    }
    if max_iters == 0 {
        return Err(GeoError::InvalidConfig("max_iters must be at least 1".into()));
    }
    let n = m.cols();
    if n == 0 || m.rows() == 0 {
        return Ok(0.0);
    }
    let mut v = alloc::vec![1.0 / math::sqrt(n as f64); n];
    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let mv = m.apply_col(&v);
        let sigma = math::norm(&mv);
        if sigma == 0.0 {
            // v is in the null space; for the all-ones start this means M·1 = 0.
            if m.as_slice().iter().all(|&x| x == 0.0) {
                return Ok(0.0);
            }
            // Restart from a basis vector that is not annihilated.
            let j = (0..n)
                .find(|&j| (0..m.rows()).any(|i| m.get(i, j) != 0.0))
                .expect("nonzero matrix has a nonzero column");
            v.iter_mut().for_each(|x| *x = 0.0);
            v[j] = 1.0;
            continue;
        }
        // v ← Mᵀ(Mv) / ‖·‖
        let mut next = alloc::vec![0.0; n];
        for (i, &s) in mv.iter().enumerate() {
            for (nx, mij) in next.iter_mut().zip(m.row(i)) {
                *nx += s * mij;
            }
        }
        let nn = math::norm(&next);
        next.iter_mut().for_each(|x| *x /= nn);
        v = next;
        if (sigma - estimate).abs() <= tol * sigma {
            return Ok(sigma);
        }
        estimate = sigma;
    }
    Err(GeoError::NoConvergence {
        iterations: max_iters,
        estimate,
    })
}

/// Both sides of `‖Δ + Δᵀ‖²_F = 2‖Δ‖²_F + 2Σᵢ dᵢᵢ²`, which holds exactly for
/// upper-triangular `Δ`.
pub fn symmetric_part_identity_check(delta: &UpperTriangularMatrix) -> (f64, f64) {
    let d = delta.dim();
    let mut lhs = 0.0;
    for i in 0..d {
        for j in 0..d {
            let s = delta.get(i, j) + delta.get(j, i);
            lhs += s * s;
        }
    }
    let diag_sq: f64 = delta.diagonal().map(|v| v * v).sum();
    let rhs = 2.0 * delta.frobenius_norm_sq() + 2.0 * diag_sq;
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit(d: usize, i: usize, j: usize, v: f64) -> UpperTriangularMatrix {
        let mut m = UpperTriangularMatrix::zeros(d).unwrap();
        m.set(i, j, v).unwrap();
        m
    }

    fn layer(w: UpperTriangularMatrix) -> GeoLayer {
        GeoLayer::new(w, LayerMeta::untrained("t")).unwrap()
    }

    fn eps_pair() -> (GeoLayer, GeoLayer) {
        // Indices are zero-based: E₁₂ ↦ (0,1), E₂₃ ↦ (1,2).
        let a = layer(unit(3, 0, 1, 0.1).add_identity());
        let b = layer(unit(3, 1, 2, 0.1).add_identity());
        (a, b)
    }

    #[test]
    fn identity_has_zero_oe() {
        let i3 = identity(3).unwrap();
        let oe = orthogonality_error(&i3);
        assert_eq!(oe.raw, 0.0);
        assert_eq!(oe.normalized, 0.0);
        assert_eq!(identity(1).unwrap().as_slice(), &[1.0]);
        assert!(perturbation(&i3).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perturbation_small_example() {
        let w = UpperTriangularMatrix::from_dense(2, vec![1.0, 0.1, 0.0, 1.0]).unwrap();
        assert_eq!(perturbation(&w).as_slice(), &[0.0, 0.1, 0.0, 0.0]);
    }

    #[test]
    fn compose_empty_and_singleton() {
        let empty = GeoStack::empty(4).unwrap();
        assert_eq!(compose(&empty).unwrap(), identity(4).unwrap());
        let (a, _) = eps_pair();
        let single = GeoStack::from_layers(vec![a.clone()]).unwrap();
        assert_eq!(&compose(&single).unwrap(), a.weight());
    }

    #[test]
    fn compose_two_unit_perturbations() {
        let (a, b) = eps_pair();
        let w = compose(&GeoStack::from_layers(vec![a, b]).unwrap()).unwrap();
        let mut expected = identity(3).unwrap();
        expected.set(0, 1, 0.1).unwrap();
        expected.set(1, 2, 0.1).unwrap();
        expected.set(0, 2, 0.1 * 0.1).unwrap();
        assert_eq!(w, expected);
    }

    #[test]
    fn quasi_additive_cross_term() {
        let (a, b) = eps_pair();
        let (_, dev) = quasi_additive_approx(&GeoStack::from_layers(vec![a.clone()]).unwrap()).unwrap();
        assert_eq!(dev, 0.0);
        let (approx, dev) = quasi_additive_approx(&GeoStack::from_layers(vec![a, b]).unwrap()).unwrap();
        assert_eq!(approx.get(0, 2), 0.0);
        assert!((dev - 0.01).abs() < 1e-15);
        assert!(quasi_additive_approx(&GeoStack::empty(3).unwrap()).is_err());
    }

    #[test]
    fn commutator_examples() {
        let (a, b) = eps_pair();
        let id = GeoLayer::identity(3, "id").unwrap();
        assert_eq!(commutator_deviation(&a, &id).unwrap(), 0.0);
        assert_eq!(commutator_deviation(&a, &a).unwrap(), 0.0);
        let c = commutator_deviation(&a, &b).unwrap();
        assert!((c - 0.01).abs() < 1e-15);
        assert_eq!(c, commutator_deviation(&b, &a).unwrap());
    }

    #[test]
    fn mixed_dims_rejected() {
        let mut s = GeoStack::empty(3).unwrap();
        assert!(matches!(
            s.push(GeoLayer::identity(4, "x").unwrap()),
            Err(GeoError::DimensionMismatch {
                expected: 3,
                found: 4
            })
        ));
    }

    #[test]
    fn oe_two_by_two() {
        let w = UpperTriangularMatrix::from_dense(2, vec![1.0, 0.1, 0.0, 1.0]).unwrap();
        let oe = orthogonality_error(&w);
        assert!((oe.raw - 0.0201).abs() < 1e-15);
        assert!((oe.normalized - libm::sqrt(0.0201) / 2.0).abs() < 1e-15);
        assert!((oe.normalized - 0.07089).abs() < 1e-5);
    }

    #[test]
    fn spectral_norm_simple_cases() {
        let z = Matrix::zeros(3, 3);
        assert_eq!(spectral_norm(&z, SPECTRAL_TOL, SPECTRAL_MAX_ITERS).unwrap(), 0.0);
        let d = Matrix::from_vec(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let s = spectral_norm(&d, SPECTRAL_TOL, SPECTRAL_MAX_ITERS).unwrap();
        assert!((s - 3.0).abs() < 1e-8);
        // all-ones start is annihilated by this matrix
        let k = Matrix::from_vec(2, 2, vec![1.0, -1.0, 0.0, 0.0]).unwrap();
        let s = spectral_norm(&k, SPECTRAL_TOL, SPECTRAL_MAX_ITERS).unwrap();
        assert!((s - libm::sqrt(2.0)).abs() < 1e-8);
    }

    #[test]
    fn spectral_norm_reports_non_convergence() {
        let m = Matrix::from_vec(2, 2, vec![1.0, 0.9, 0.3, 1.0]).unwrap();
        match spectral_norm(&m, 1e-15, 1) {
            Err(GeoError::NoConvergence { iterations: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(spectral_norm(&m, 0.0, 10).is_err());
        assert!(spectral_norm(&m, 1e-9, 0).is_err());
    }

    #[test]
    fn symmetric_identity_examples() {
        let z = UpperTriangularMatrix::zeros(3).unwrap();
        assert_eq!(symmetric_part_identity_check(&z), (0.0, 0.0));
        let (l, r) = symmetric_part_identity_check(&unit(3, 0, 1, 0.1));
        assert!((l - 0.02).abs() < 1e-15 && (r - 0.02).abs() < 1e-15);
        let (l, r) = symmetric_part_identity_check(&unit(3, 0, 0, 0.1));
        assert!((l - 0.04).abs() < 1e-15 && (r - 0.04).abs() < 1e-15);
    }

    #[test]
    fn fold_empty_is_identity() {
        let p = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(fold(&p, &GeoStack::empty(3).unwrap()).unwrap(), p);
        let id = GeoStack::from_layers(vec![GeoLayer::identity(3, "i").unwrap()]).unwrap();
        assert_eq!(fold(&p, &id).unwrap(), p);
        assert!(fold(&p, &GeoStack::empty(2).unwrap()).is_err());
    }

    #[test]
    fn zero_diagonal_rejected() {
        let w = UpperTriangularMatrix::zeros(2).unwrap();
        assert!(GeoLayer::new(w, LayerMeta::untrained("z")).is_err());
    }

    #[test]
    fn permuted_validates_order() {
        let (a, b) = eps_pair();
        let s = GeoStack::from_layers(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(s.permuted(&[1, 0]).unwrap().layers()[0], b);
        assert!(s.permuted(&[0, 0]).is_err());
        assert!(s.permuted(&[0]).is_err());
    }
}
