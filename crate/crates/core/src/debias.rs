//! Debiased local classification: per-class drift between the global and
//! local classifier heads, its mean λ, few-shot class detection, and the
//! class-weight vector α that reweights the local loss.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The classes a client considers underrepresented locally.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotSet {
    pub classes: BTreeSet<usize>,
    pub threshold_tau: f64,
}

impl FewShotSet {
    pub fn contains(&self, class: usize) -> bool {
        self.classes.contains(&class)
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// One epoch's drift measurement and the class weights it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasState {
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub distance_vec: Vec<f64>,
}

impl DebiasState {
    /// Measures drift between the two classifier heads and derives α for the
    /// given few-shot set.
    pub fn compute(
        clf_global: &Tensor,
        clf_local: &Tensor,
        few_shot: &FewShotSet,
        num_classes: usize,
    ) -> Result<Self> {
        let distance_vec = classifier_distance(clf_global, clf_local)?;
        if distance_vec.len() != num_classes {
            return Err(Error::ShapeMismatch(format!(
                "classifier has {} columns for {num_classes} classes",
                distance_vec.len()
            )));
        }
        let lambda = lambda_from_distance(&distance_vec)?;
        let alpha = class_weight_vector(few_shot, lambda, num_classes)?;
        Ok(Self {
            lambda,
            alpha,
            distance_vec,
        })
    }
}

/// Per-class Euclidean distance between two `[R, C]` classifier weight
/// matrices: entry `m` is the norm of the difference of column `m`. Biases
/// are excluded by construction (callers pass weight tensors only).
pub fn classifier_distance(w_global: &Tensor, w_local: &Tensor) -> Result<Vec<f64>> {
    if !w_global.same_shape(w_local) {
        return Err(Error::ShapeMismatch(format!(
            "classifier_distance: {:?} vs {:?}",
            w_global.shape(),
            w_local.shape()
        )));
    }
    let (r, c) = w_global.dims2()?;
    Ok((0..c)
        .map(|m| {
            let mut sum = 0.0;
            for n in 0..r {
                let d = w_global.at2(n, m) - w_local.at2(n, m);
                sum += d * d;
            }
            sum.sqrt()
        })
        .collect())
}

/// λ: the arithmetic mean of the per-class distance vector.
pub fn lambda_from_distance(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::InvalidConfig("empty distance vector".into()));
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Classes with at least one sample but fewer than `tau * (K / C)` of them.
/// Zero-count classes never join the set: they contribute no loss terms.
pub fn few_shot_set(label_counts: &[usize], tau: f64) -> Result<FewShotSet> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "tau must be in (0, 1], got {tau}"
        )));
    }
    if label_counts.is_empty() {
        return Err(Error::InvalidConfig("no classes".into()));
    }
    let total: usize = label_counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidConfig("all label counts are zero".into()));
    }
    let threshold = tau * (total as f64 / label_counts.len() as f64);
    let classes = label_counts
        .iter()
        .enumerate()
        .filter(|&(_, &n)| n >= 1 && (n as f64) < threshold)
        .map(|(c, _)| c)
        .collect();
    Ok(FewShotSet {
        classes,
        threshold_tau: tau,
    })
}

/// α: `1 + lambda` for few-shot classes, `1` otherwise.
pub fn class_weight_vector(m: &FewShotSet, lambda: f64, num_classes: usize) -> Result<Vec<f64>> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::NonFinite(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    if let Some(&bad) = m.classes.iter().find(|&&c| c >= num_classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_classes,
        });
    }
    Ok((0..num_classes)
        .map(|c| if m.contains(c) { 1.0 + lambda } else { 1.0 })
        .collect())
}
