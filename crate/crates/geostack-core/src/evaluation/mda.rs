use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::margin::{accuracy, margin_records, mean};
use crate::error::{GeoError, Result};
use crate::geometry::{
    check_permutation, compose, orthogonality_error, pairwise_commutators, quasi_additive_approx,
    task_arithmetic, GeoLayer, GeoStack,
};
use crate::matrix::UpperTriangularMatrix;
use crate::rng;
use crate::training::EmbeddingDataset;

/// Exhaustive enumeration is used up to this many orderings.
pub const EXHAUSTIVE_ORDERINGS: usize = 24;

/// How a set of experts is merged into one operator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CompositionMode {
    /// Multiplicative stacking `∏Wₖ`.
    #[default]
    Product,
    /// Additive merge `I + α·ΣΔₖ`.
    TaskArithmetic { alpha: f64 },
}

impl CompositionMode {
    pub fn merge(&self, stack: &GeoStack) -> Result<UpperTriangularMatrix> {
        match *self {
            CompositionMode::Product => compose(stack),
            CompositionMode::TaskArithmetic { alpha } => task_arithmetic(stack, alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DomainResult {
    pub domain_id: String,
    pub zero_shot_accuracy: f64,
    /// Accuracy under the domain's own expert alone.
    pub solo_accuracy: f64,
    pub stacked_accuracy: f64,
    /// Mean margin (true class minus best competitor) under the composite.
    pub mean_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CommutatorEntry {
    pub first: String,
    pub second: String,
    pub deviation: f64,
}

/// Diagnostics for one composed stack evaluated on every domain.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StabilityReport {
    /// Domain ids in stacking order, joined by `->`.
    pub stack: String,
    pub mode: CompositionMode,
    pub domains: Vec<DomainResult>,
    pub composite_raw_oe: f64,
    pub composite_normalized_oe: f64,
    /// Normalized OE of each layer, in stacking order.
    pub layer_normalized_oe: Vec<f64>,
    pub commutators: Vec<CommutatorEntry>,
    pub quasi_additive_deviation: f64,
}

impl StabilityReport {
    pub fn domain(&self, id: &str) -> Option<&DomainResult> {
        self.domains.iter().find(|d| d.domain_id == id)
    }

    pub fn mean_stacked_accuracy(&self) -> f64 {
        mean(self.domains.iter().map(|d| d.stacked_accuracy))
    }

    pub fn mean_zero_shot_accuracy(&self) -> f64 {
        mean(self.domains.iter().map(|d| d.zero_shot_accuracy))
    }
}

fn check_inputs(domains: &[EmbeddingDataset], layers: &[GeoLayer]) -> Result<usize> {
    if domains.is_empty() {
        return Err(GeoError::InvalidInput("no domains".into()));
    }
    if domains.len() != layers.len() {
        return Err(GeoError::InvalidInput(alloc::format!(
            "{} domains but {} layers",
            domains.len(),
            layers.len()
        )));
    }
    let dim = domains[0].dim();
    for (k, d) in domains.iter().enumerate() {
        if d.dim() != dim {
            return Err(GeoError::DimensionMismatch {
                expected: dim,
                found: d.dim(),
            });
        }
        if domains[..k].iter().any(|o| o.domain_id() == d.domain_id()) {
            return Err(GeoError::InvalidInput(alloc::format!(
                "duplicate domain id '{}'",
                d.domain_id()
            )));
        }
    }
    for l in layers {
        if l.dim() != dim {
            return Err(GeoError::DimensionMismatch {
                expected: dim,
                found: l.dim(),
            });
        }
    }
    Ok(dim)
}

/// Composes `layers` (one per domain, `layers[i]` trained on `domains[i]`)
/// in `order` and evaluates every domain under the product.
pub fn run_mda(
    domains: &[EmbeddingDataset],
    layers: &[GeoLayer],
    order: &[usize],
) -> Result<StabilityReport> {
    run_mda_with(domains, layers, order, CompositionMode::Product)
}

pub fn run_mda_with(
    domains: &[EmbeddingDataset],
    layers: &[GeoLayer],
    order: &[usize],
    mode: CompositionMode,
) -> Result<StabilityReport> {
    let dim = check_inputs(domains, layers)?;
    check_permutation(order, layers.len())?;
    let stack = GeoStack::from_layers(order.iter().map(|&i| layers[i].clone()).collect())?;
    let composite = mode.merge(&stack)?;
    let identity = UpperTriangularMatrix::identity(dim)?;

    let mut results = Vec::with_capacity(domains.len());
    for (data, layer) in domains.iter().zip(layers) {
        let margins = margin_records(data, &composite)?;
        results.push(DomainResult {
            domain_id: data.domain_id().into(),
            zero_shot_accuracy: accuracy(data, &identity)?,
            solo_accuracy: accuracy(data, layer.weight())?,
            stacked_accuracy: accuracy(data, &composite)?,
            mean_margin: mean(margins.iter().map(|r| r.margin)),
        });
    }
    let oe = orthogonality_error(&composite);
    let names: Vec<&str> = stack.layers().iter().map(GeoLayer::domain_id).collect();
    let commutators = pairwise_commutators(&stack)?
        .into_iter()
        .map(|(i, j, deviation)| CommutatorEntry {
            first: names[i].into(),
            second: names[j].into(),
            deviation,
        })
        .collect();
    Ok(StabilityReport {
        stack: names.join("->"),
        mode,
        domains: results,
        composite_raw_oe: oe.raw,
        composite_normalized_oe: oe.normalized,
        layer_normalized_oe: stack.layers().iter().map(GeoLayer::normalized_oe).collect(),
        commutators,
        quasi_additive_deviation: quasi_additive_approx(&stack)?.1,
    })
}

/// Accuracy dispersion of one domain across stacking orders.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PermutationStats {
    pub domain_id: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    pub evaluations: usize,
}

/// Next permutation in lexicographic order; false once the last is reached.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len())
        .rev()
        .find(|&j| p[j] > p[i - 1])
        .expect("pivot has a successor");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn factorial_capped(n: usize, cap: usize) -> usize {
    (1..=n)
        .try_fold(1usize, |acc, k| acc.checked_mul(k).filter(|&v| v <= cap))
        .unwrap_or(cap + 1)
}

/// Orderings to evaluate: all of them when there are at most
/// [`EXHAUSTIVE_ORDERINGS`] and `k` does not ask for fewer (`k = 0` means
/// all), otherwise `k` seeded shuffles.
pub fn permutation_orders(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let total = factorial_capped(n, EXHAUSTIVE_ORDERINGS);
    if total <= EXHAUSTIVE_ORDERINGS {
        let mut all = Vec::with_capacity(total);
        let mut p: Vec<usize> = (0..n).collect();
        loop {
            all.push(p.clone());
            if !next_permutation(&mut p) {
                break;
            }
        }
        if k == 0 || k >= all.len() {
            return Ok(all);
        }
        let mut rng = rng::seeded(seed);
        all.shuffle(&mut rng);
        all.truncate(k);
        return Ok(all);
    }
    if k == 0 {
        return Err(GeoError::InvalidInput(alloc::format!(
            "{n} layers have too many orderings to enumerate; give a sample count"
        )));
    }
    let mut rng = rng::seeded(seed);
    Ok((0..k)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect())
}

/// Per-domain accuracy statistics over stacking orders.
pub fn permutation_test(
    domains: &[EmbeddingDataset],
    layers: &[GeoLayer],
    k_permutations: usize,
    seed: u64,
) -> Result<Vec<PermutationStats>> {
    check_inputs(domains, layers)?;
    if layers.len() < 2 {
        return Err(GeoError::InvalidInput(
            "permutation test needs at least two layers".into(),
        ));
    }
    let orders = permutation_orders(layers.len(), k_permutations, seed)?;
    let mut samples: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(orders.len()); domains.len()];
    for order in &orders {
        let stack = GeoStack::from_layers(order.iter().map(|&i| layers[i].clone()).collect())?;
        let w = compose(&stack)?;
        for (data, acc) in domains.iter().zip(samples.iter_mut()) {
            acc.push(accuracy(data, &w)?);
        }
    }
    Ok(domains
        .iter()
        .zip(samples)
        .map(|(data, values)| dispersion(data.domain_id().into(), &values))
        .collect())
}

fn dispersion(domain_id: String, values: &[f64]) -> PermutationStats {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m = mean(values.iter().copied());
    let std = if min == max {
        0.0
    } else {
        crate::math::sqrt(mean(values.iter().map(|v| (v - m) * (v - m))))
    };
    PermutationStats {
        domain_id,
        mean: if min == max { min } else { m },
        std,
        min,
        max,
        range: max - min,
        evaluations: values.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn enumerates_all_small_orderings() {
        let all = permutation_orders(4, 0, 0).unwrap();
        assert_eq!(all.len(), 24);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 24);
        assert_eq!(permutation_orders(3, 100, 0).unwrap().len(), 6);
        assert_eq!(permutation_orders(4, 5, 0).unwrap().len(), 5);
        assert_eq!(permutation_orders(6, 10, 0).unwrap().len(), 10);
        assert!(permutation_orders(6, 0, 0).is_err());
        assert_eq!(permutation_orders(1, 0, 0).unwrap(), vec![vec![0]]);
    }

    #[test]
    fn constant_values_have_zero_spread() {
        let s = dispersion("x".into(), &[0.7; 24]);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.mean, 0.7);
        assert_eq!(s.range, 0.0);
    }

    #[test]
    fn population_std() {
        let s = dispersion("x".into(), &[1.0, 3.0]);
        assert_eq!(s.std, 1.0);
        assert_eq!(s.range, 2.0);
    }
}
