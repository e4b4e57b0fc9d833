use serde::{Deserialize, Serialize};

use super::weibull::{fit_weibull_tail, weibull_cdf};
use super::{OpenSetDecision, OpenSetError};
use crate::classifier::{predict_topm, sigmoid, softmax};

/// Per-class tail model in logit space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullTailModel {
    pub class_id: usize,
    pub mav: Vec<f64>,
    pub kappa: f64,
    pub sigma: f64,
    pub tau: usize,
}

impl WeibullTailModel {
    /// Outlier weight of an activation vector with respect to this class.
    pub fn outlier_weight(&self, activation: &[f64]) -> f64 {
        weibull_cdf(euclidean(activation, &self.mav), self.kappa, self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenMaxConfig {
    pub alpha: usize,
    pub delta: f64,
    pub tau: usize,
}

impl OpenMaxConfig {
    pub fn validate(&self, n_classes: usize) -> Result<(), OpenSetError> {
        if self.alpha == 0 || self.alpha > n_classes {
            return Err(OpenSetError::InvalidConfig(format!(
                "alpha {} outside 1..={n_classes}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(OpenSetError::InvalidConfig(format!(
                "delta {} outside [0, 1]",
                self.delta
            )));
        }
        if self.tau == 0 {
            return Err(OpenSetError::InvalidConfig("tau must be positive".into()));
        }
        Ok(())
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// One training activation credited to a class.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub class: usize,
    pub activation: Vec<f64>,
}

/// Multi-class membership: the example is correctly classified.
pub fn qualifies_multiclass(logits: &[f64], true_class: usize) -> bool {
    crate::classifier::argmax(logits) == true_class
}

/// Multi-label membership: positives that also appear in the top-`m`
/// prediction.
pub fn qualifying_classes_multilabel(logits: &[f64], positives: &[usize], m: usize) -> Vec<usize> {
    let top = predict_topm(logits, m);
    positives
        .iter()
        .copied()
        .filter(|c| top.contains(c))
        .collect()
}

/// Arithmetic mean of `vectors`.
pub fn mean_activation(vectors: &[&[f64]]) -> Option<Vec<f64>> {
    let first = vectors.first()?;
    let mut out = vec![0.0; first.len()];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    let n = vectors.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Some(out)
}

/// Per-class MAVs and sorted MAV distances, from which tail models for any
/// tail size can be fitted without revisiting the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCalibration {
    pub classes: Vec<ClassTail>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassTail {
    pub class_id: usize,
    pub mav: Vec<f64>,
    /// Distances of qualifying activations to the MAV, descending.
    pub distances: Vec<f64>,
}

impl TailCalibration {
    /// Groups qualifying records by class and computes MAVs and distances.
    /// Every class in `0..n_classes` needs at least `min_count` records.
    pub fn fit(
        records: &[ActivationRecord],
        n_classes: usize,
        min_count: usize,
    ) -> Result<Self, OpenSetError> {
        let mut by_class: Vec<Vec<&[f64]>> = vec![Vec::new(); n_classes];
        for r in records {
            by_class
                .get_mut(r.class)
                .ok_or(OpenSetError::MissingModel(r.class))?
                .push(&r.activation);
        }
        let short: Vec<(usize, usize)> = by_class
            .iter()
            .enumerate()
            .filter(|(_, v)| v.len() < min_count.max(1))
            .map(|(c, v)| (c, v.len()))
            .collect();
        if !short.is_empty() {
            return Err(OpenSetError::TooFewQualifying {
                classes: short,
                need: min_count.max(1),
            });
        }
        let classes = by_class
            .iter()
            .enumerate()
            .map(|(class_id, acts)| {
                let mav = mean_activation(acts).expect("non-empty by check above");
                let mut distances: Vec<f64> = acts.iter().map(|a| euclidean(a, &mav)).collect();
                distances.sort_by(|a, b| b.total_cmp(a));
                ClassTail {
                    class_id,
                    mav,
                    distances,
                }
            })
            .collect();
        Ok(Self { classes })
    }

    /// Fewest qualifying activations of any class; the largest usable tail.
    pub fn max_tau(&self) -> usize {
        self.classes.iter().map(|c| c.distances.len()).min().unwrap_or(0)
    }

    pub fn models(&self, tau: usize) -> Result<Vec<WeibullTailModel>, OpenSetError> {
        self.classes
            .iter()
            .map(|c| {
                let fit = fit_weibull_tail(&c.distances, tau).map_err(|e| OpenSetError::Class {
                    class: c.class_id,
                    source: Box::new(e),
                })?;
                Ok(WeibullTailModel {
                    class_id: c.class_id,
                    mav: c.mav.clone(),
                    kappa: fit.kappa,
                    sigma: fit.sigma,
                    tau,
                })
            })
            .collect()
    }
}

/// Penalises the top-`alpha` logits by their Weibull outlier weights.
///
/// For rank `r` (1-based) class `j` gets `scale_j = 1 - (alpha - r + 1) /
/// alpha * w_j`; `v_w[j] = v[j] * scale_j` and the removed mass
/// `sum v[j] (1 - scale_j)` becomes the unknown logit.
pub fn openmax_recalibrate(
    v: &[f64],
    models: &[WeibullTailModel],
    alpha: usize,
) -> Result<(Vec<f64>, f64), OpenSetError> {
    if alpha == 0 || alpha > v.len() {
        return Err(OpenSetError::InvalidConfig(format!(
            "alpha {alpha} outside 1..={}",
            v.len()
        )));
    }
    let ranked = {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
        idx
    };
    let mut v_w = v.to_vec();
    let mut v0 = 0.0;
    for (rank0, &j) in ranked.iter().take(alpha).enumerate() {
        let model = models
            .get(j)
            .filter(|m| m.class_id == j)
            .ok_or(OpenSetError::MissingModel(j))?;
        let w = model.outlier_weight(v);
        let scale = 1.0 - (alpha - rank0) as f64 / alpha as f64 * w;
        v_w[j] = v[j] * scale;
        v0 += v[j] - v_w[j];
    }
    Ok((v_w, v0))
}

/// How recalibrated logits become probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputSquash {
    /// Softmax over `(v_w, v_0)` jointly (multi-class models).
    Softmax,
    /// Independent sigmoids (multi-label models).
    Sigmoid,
}

/// OpenMax decision for one logit vector: unknown when the best known
/// probability is below `delta` or does not exceed `p_u`.
pub fn decide_openmax(
    v: &[f64],
    models: &[WeibullTailModel],
    config: &OpenMaxConfig,
    squash: OutputSquash,
) -> Result<OpenSetDecision, OpenSetError> {
    config.validate(v.len())?;
    let (v_w, v0) = openmax_recalibrate(v, models, config.alpha)?;
    let (y_w, p_u) = match squash {
        OutputSquash::Softmax => {
            let mut full = v_w;
            full.push(v0);
            let mut probs = softmax(&full);
            let p_u = probs.pop().expect("N + 1 entries");
            (probs, p_u)
        }
        OutputSquash::Sigmoid => (v_w.iter().map(|&x| sigmoid(x)).collect(), sigmoid(v0)),
    };
    let max = y_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(OpenSetDecision {
        unknown: max < config.delta || p_u >= max,
        y_hat_w: Some(y_w),
        p_u: Some(p_u),
    })
}

/// Applies [`decide_openmax`] to every source and flags the clip unknown if
/// any source is. The reported outputs are those of the source with the
/// largest `p_u`.
pub fn decide_openmax_per_source(
    sources: &[Vec<f64>],
    models: &[WeibullTailModel],
    config: &OpenMaxConfig,
    squash: OutputSquash,
) -> Result<OpenSetDecision, OpenSetError> {
    let decisions = sources
        .iter()
        .map(|v| decide_openmax(v, models, config, squash))
        .collect::<Result<Vec<_>, _>>()?;
    let unknown = decisions.iter().any(|d| d.unknown);
    let mut best = decisions
        .into_iter()
        .reduce(|a, b| if b.p_u > a.p_u { b } else { a })
        .ok_or(OpenSetError::Empty)?;
    best.unknown = unknown;
    Ok(best)
}
