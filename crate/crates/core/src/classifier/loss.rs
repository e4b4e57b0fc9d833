use itertools::Itertools;
use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// Largest polyphony PIT enumerates (4! = 24 assignments).
pub const MAX_PIT_SOURCES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Per-output binary cross-entropy against a multi-hot target.
    Bce,
    /// Categorical cross-entropy against a single class.
    Ce,
    /// Categorical cross-entropy minimised over label-to-source assignments.
    Pit,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|x| (x - lse).exp()).collect()
}

/// Sum over outputs of `max(v, 0) - v y + ln(1 + exp(-|v|))`.
pub fn bce_loss(v: &[f64], y: &[f64]) -> Result<f64, ClassifierError> {
    if v.len() != y.len() {
        return Err(ClassifierError::ShapeMismatch {
            expected: v.len(),
            got: y.len(),
            context: "multi-hot target".into(),
        });
    }
    Ok(v.iter()
        .zip(y)
        .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
        .sum())
}

pub(crate) fn bce_grad(v: &[f64], y: &[f64]) -> Vec<f64> {
    v.iter().zip(y).map(|(&x, &t)| sigmoid(x) - t).collect()
}

/// `log_sum_exp(v) - v[k]`.
pub fn ce_loss(v: &[f64], k: usize) -> Result<f64, ClassifierError> {
    if k >= v.len() {
        return Err(ClassifierError::ClassOutOfRange {
            class: k,
            n: v.len(),
        });
    }
    Ok(log_sum_exp(v) - v[k])
}

pub(crate) fn ce_grad(v: &[f64], k: usize) -> Vec<f64> {
    let mut g = softmax(v);
    g[k] -= 1.0;
    g
}

/// Result of a permutation-invariant match.
#[derive(Debug, Clone, PartialEq)]
pub struct PitMatch {
    pub loss: f64,
    /// `assignment[i]` is the source row matched to label `i`.
    pub assignment: Vec<usize>,
}

/// Exhaustive minimum over all `m!` assignments of labels to source rows of
/// `sum_i ce(v[assignment[i]], labels[i])`. Ties keep the lexicographically
/// smallest assignment.
pub fn pit_loss(per_source_logits: &[Vec<f64>], labels: &[usize]) -> Result<PitMatch, ClassifierError> {
    let m = labels.len();
    if m == 0 || m > MAX_PIT_SOURCES {
        return Err(ClassifierError::TooManySources(m));
    }
    if per_source_logits.len() != m {
        return Err(ClassifierError::ShapeMismatch {
            expected: m,
            got: per_source_logits.len(),
            context: "source rows for PIT".into(),
        });
    }
    // cost[i][j]: label i scored on source j
    let mut cost = vec![[0.0; MAX_PIT_SOURCES]; m];
    for (i, &label) in labels.iter().enumerate() {
        for (j, v) in per_source_logits.iter().enumerate() {
            cost[i][j] = ce_loss(v, label)?;
        }
    }
    let mut best: Option<PitMatch> = None;
    for perm in (0..m).permutations(m) {
        let loss: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if best.as_ref().is_none_or(|b| loss < b.loss) {
            best = Some(PitMatch {
                loss,
                assignment: perm,
            });
        }
    }
    Ok(best.expect("m >= 1 yields at least one permutation"))
}
