//! Clip-level evaluation: unknown detection as a binary task, closed-set
//! tagging quality (micro/macro F1, mAP) on clips with only known classes,
//! and mean/SD aggregation across dataset variants.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} predictions vs {1} ground-truth entries")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("no class has a positive example")]
    NoValidClass,
    #[error("variant {0} has no result")]
    MissingVariant(usize),
    #[error("variant {0} reported more than once")]
    DuplicateVariant(usize),
}

/// Confusion cells with "unknown present" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnknownDetectionReport {
    pub accuracy: f64,
    pub counts: Confusion,
}

/// Whether a clip's label set contains any class from `unknown_classes`.
pub fn has_unknown(labels: &[usize], unknown_classes: &[usize]) -> bool {
    labels.iter().any(|l| unknown_classes.contains(l))
}

pub fn unknown_detection_accuracy(
    decisions: &[bool],
    truth: &[bool],
) -> Result<UnknownDetectionReport, EvalError> {
    if decisions.len() != truth.len() {
        return Err(EvalError::LengthMismatch(decisions.len(), truth.len()));
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut c = Confusion::default();
    for (&d, &t) in decisions.iter().zip(truth) {
        match (d, t) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(UnknownDetectionReport {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        counts: c,
    })
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

fn check_sets(pred: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// F1 of TP/FP/FN pooled over every clip and class. Label sets are treated
/// as sets; duplicates count once.
pub fn micro_f1(pred: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<f64, EvalError> {
    check_sets(pred, truth)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, t) in pred.iter().zip(truth) {
        let p = dedup(p);
        let t = dedup(t);
        let hits = p.iter().filter(|c| t.contains(c)).count();
        tp += hits;
        fp += p.len() - hits;
        fn_ += t.len() - hits;
    }
    Ok(f1(tp, fp, fn_))
}

/// Unweighted mean over `classes` of per-class F1, with 0/0 counted as 0.
pub fn macro_f1(pred: &[Vec<usize>], truth: &[Vec<usize>], classes: &[usize]) -> Result<f64, EvalError> {
    check_sets(pred, truth)?;
    if classes.is_empty() {
        return Err(EvalError::NoValidClass);
    }
    let total: f64 = classes
        .iter()
        .map(|c| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (p, t) in pred.iter().zip(truth) {
                match (p.contains(c), t.contains(c)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            f1(tp, fp, fn_)
        })
        .sum();
    Ok(total / classes.len() as f64)
}

fn dedup(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Average precision of one class: mean precision at the rank of each
/// positive, ranking by descending score with ties in clip order. `None` when
/// there is no positive.
pub fn average_precision(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if truth[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map: f64,
    /// `None` for classes without positives, which are excluded from the mean.
    pub per_class: Vec<Option<f64>>,
}

/// mAP over classes `0..n_classes`; `scores[clip][class]`, `truth[clip]` the
/// positive classes.
pub fn mean_average_precision(
    scores: &[Vec<f64>],
    truth: &[Vec<usize>],
    n_classes: usize,
) -> Result<MapReport, EvalError> {
    if scores.len() != truth.len() {
        return Err(EvalError::LengthMismatch(scores.len(), truth.len()));
    }
    let per_class: Vec<Option<f64>> = (0..n_classes)
        .map(|c| {
            let s: Vec<f64> = scores.iter().map(|row| row[c]).collect();
            let t: Vec<bool> = truth.iter().map(|set| set.contains(&c)).collect();
            average_precision(&s, &t)
        })
        .collect();
    let excluded: Vec<usize> = (0..n_classes).filter(|&c| per_class[c].is_none()).collect();
    if !excluded.is_empty() {
        log::info!("mAP excludes classes without positives: {excluded:?}");
    }
    let valid: Vec<f64> = per_class.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(EvalError::NoValidClass);
    }
    Ok(MapReport {
        map: valid.iter().sum::<f64>() / valid.len() as f64,
        per_class,
    })
}

/// Model outputs for one clip, in the known-class index space.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedSetClip {
    pub truth: Vec<usize>,
    pub contains_unknown: bool,
    pub predicted: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedSetReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub map: f64,
    pub per_class_ap: Vec<Option<f64>>,
    /// Clips that entered the metrics.
    pub n_evaluated: usize,
    /// Clips skipped because they contain an unknown class.
    pub n_skipped: usize,
}

/// Closed-set metrics over the clips without unknown classes.
pub fn closed_set_report(clips: &[ClosedSetClip], n_classes: usize) -> Result<ClosedSetReport, EvalError> {
    let kept: Vec<&ClosedSetClip> = clips.iter().filter(|c| !c.contains_unknown).collect();
    if kept.is_empty() {
        return Err(EvalError::Empty);
    }
    let pred: Vec<Vec<usize>> = kept.iter().map(|c| c.predicted.clone()).collect();
    let truth: Vec<Vec<usize>> = kept.iter().map(|c| c.truth.clone()).collect();
    let scores: Vec<Vec<f64>> = kept.iter().map(|c| c.scores.clone()).collect();
    let classes: Vec<usize> = (0..n_classes).collect();
    let map = mean_average_precision(&scores, &truth, n_classes)?;
    Ok(ClosedSetReport {
        micro_f1: micro_f1(&pred, &truth)?,
        macro_f1: macro_f1(&pred, &truth, &classes)?,
        map: map.map,
        per_class_ap: map.per_class,
        n_evaluated: kept.len(),
        n_skipped: clips.len() - kept.len(),
    })
}

/// Mean and sample standard deviation (n - 1) of one metric over variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantAggregate {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl VariantAggregate {
    /// Accuracy in percent with one decimal: `57.4 (2.9)`.
    pub fn format_percent(&self) -> String {
        format!("{:.1} ({:.1})", 100.0 * self.mean, 100.0 * self.sd)
    }

    /// Three decimals: `0.449 (0.010)`.
    pub fn format_score(&self) -> String {
        format!("{:.3} ({:.3})", self.mean, self.sd)
    }
}

/// Aggregates `(variant, value)` pairs; every variant in `1..=n_variants`
/// must appear exactly once.
pub fn aggregate_variants(values: &[(usize, f64)], n_variants: usize) -> Result<VariantAggregate, EvalError> {
    let mut seen = vec![None; n_variants];
    for &(variant, value) in values {
        let slot = variant
            .checked_sub(1)
            .and_then(|i| seen.get_mut(i))
            .ok_or(EvalError::MissingVariant(variant))?;
        if slot.is_some() {
            return Err(EvalError::DuplicateVariant(variant));
        }
        *slot = Some(value);
    }
    let xs: Vec<f64> = seen
        .iter()
        .enumerate()
        .map(|(i, v)| v.ok_or(EvalError::MissingVariant(i + 1)))
        .collect::<Result<_, _>>()?;
    if xs.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(VariantAggregate {
        mean,
        sd,
        n: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detection_accuracy_cases() {
        let truth = [true, false, true, false];
        assert_eq!(unknown_detection_accuracy(&truth, &truth).unwrap().accuracy, 1.0);
        let truth: Vec<bool> = (0..10).map(|i| i < 4).collect();
        let r = unknown_detection_accuracy(&[false; 10], &truth).unwrap();
        assert!((r.accuracy - 0.6).abs() < 1e-15);
        let r = unknown_detection_accuracy(&[true, true, false, false, true], &[true, false, false, true, true]).unwrap();
        assert_eq!(
            r.counts,
            Confusion {
                tp: 2,
                tn: 1,
                fp: 1,
                fn_: 1
            }
        );
        assert_eq!(r.accuracy, 0.6);
        assert!(unknown_detection_accuracy(&[true], &[]).is_err());
    }

    #[test]
    fn f1_cases() {
        let t = vec![vec![0], vec![1, 2]];
        assert_eq!(micro_f1(&t, &t).unwrap(), 1.0);
        assert_eq!(macro_f1(&t, &t, &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(micro_f1(&[vec![1], vec![0]], &[vec![0], vec![1]]).unwrap(), 0.0);
        // three clips, one partial match: TP=3, FP=1, FN=1
        let truth = vec![vec![0], vec![1, 2], vec![2]];
        let pred = vec![vec![0], vec![1, 0], vec![2]];
        assert!((micro_f1(&pred, &truth).unwrap() - 6.0 / 8.0).abs() < 1e-15);
        // class 0: tp1 fp1 -> 2/3; class 1: 1; class 2: tp1 fn1 -> 2/3
        let want = (2.0 / 3.0 + 1.0 + 2.0 / 3.0) / 3.0;
        assert!((macro_f1(&pred, &truth, &[0, 1, 2]).unwrap() - want).abs() < 1e-15);
        // absent class with no prediction counts as zero
        let with_absent = (2.0 / 3.0 + 1.0 + 2.0 / 3.0) / 4.0;
        assert!((macro_f1(&pred, &truth, &[0, 1, 2, 3]).unwrap() - with_absent).abs() < 1e-15);
        assert_eq!(micro_f1(&[], &[]), Err(EvalError::Empty));
    }

    #[test]
    fn ap_cases() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]), Some(1.0));
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.7], &[true, false, true]),
            Some((1.0 + 2.0 / 3.0) / 2.0)
        );
        assert_eq!(average_precision(&[0.2, 0.8], &[true, false]), Some(0.5));
        assert_eq!(average_precision(&[0.2, 0.8], &[false, false]), None);
        // ties keep clip order
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]), Some(0.5));
    }

    #[test]
    fn map_skips_classes_without_positives() {
        let scores = vec![vec![0.9, 0.1, 0.3], vec![0.2, 0.7, 0.3]];
        let truth = vec![vec![0], vec![0]];
        let r = mean_average_precision(&scores, &truth, 3).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.per_class, vec![Some(1.0), None, None]);
        assert_eq!(
            mean_average_precision(&scores, &[vec![], vec![]], 3),
            Err(EvalError::NoValidClass)
        );
    }

    #[test]
    fn aggregation() {
        let same: Vec<(usize, f64)> = (1..=5).map(|v| (v, 0.4)).collect();
        assert_eq!(aggregate_variants(&same, 5).unwrap().sd, 0.0);
        let vals: Vec<(usize, f64)> = (1..=5).map(|v| (v, 56.0 + v as f64)).collect();
        assert_eq!(aggregate_variants(&vals, 5).unwrap().mean, 59.0);
        let vals: Vec<(usize, f64)> = (1..=5).map(|v| (v, v as f64)).collect();
        let agg = aggregate_variants(&vals, 5).unwrap();
        assert!((agg.sd - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            aggregate_variants(&vals[..4], 5),
            Err(EvalError::MissingVariant(5))
        );
        let dup = [(1, 0.1), (1, 0.2)];
        assert_eq!(aggregate_variants(&dup, 2), Err(EvalError::DuplicateVariant(1)));
    }

    #[test]
    fn formatting_precision() {
        let a = VariantAggregate {
            mean: 0.574,
            sd: 0.029,
            n: 5,
        };
        assert_eq!(a.format_percent(), "57.4 (2.9)");
        assert_eq!(a.format_score(), "0.574 (0.029)");
    }

    #[test]
    fn closed_set_ignores_unknown_clips() {
        let clean = ClosedSetClip {
            truth: vec![0],
            contains_unknown: false,
            predicted: vec![0],
            scores: vec![0.9, 0.1],
        };
        let dirty = ClosedSetClip {
            truth: vec![1],
            contains_unknown: true,
            predicted: vec![0],
            scores: vec![0.9, 0.1],
        };
        let r = closed_set_report(&[clean.clone(), dirty], 2).unwrap();
        assert_eq!(r.n_evaluated, 1);
        assert_eq!(r.n_skipped, 1);
        assert_eq!(r.micro_f1, 1.0);
        assert_eq!(r, closed_set_report(&[clean], 2).map(|mut x| { x.n_skipped = 1; x }).unwrap());
    }
}
