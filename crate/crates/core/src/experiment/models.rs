//! The five classifier configurations and how each one turns a rendered clip
//! into training samples, logits, open-set decisions and closed-set output.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{
    argmax, predict_topm, sigmoid, softmax, ClassifierError, ComboVocabulary, LossKind, MlpParams,
    pit_loss, Sample,
};
use crate::dataset_plan::{ClassId, ClassSplit};
use crate::openset::{
    decide_msp, decide_msp_per_source, decide_openmax, decide_openmax_per_source,
    qualifies_multiclass, qualifying_classes_multilabel, ActivationRecord, OpenMaxConfig,
    OpenSetError, OutputSquash, WeibullTailModel,
};
use crate::synth_features::RenderedClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Mixture in, one sigmoid per known class.
    MultiLabel,
    /// Separated source estimates in, trained with PIT.
    EstimatesPit,
    /// Clean source features in, trained with PIT.
    OraclePit,
    /// Mixture in, one softmax output per training label set.
    Combinatorial,
    /// Clean source features in, one example per source.
    OracleMulticlass,
}

impl ModelKind {
    /// Report row order.
    pub const ALL: [ModelKind; 5] = [
        ModelKind::MultiLabel,
        ModelKind::EstimatesPit,
        ModelKind::OraclePit,
        ModelKind::Combinatorial,
        ModelKind::OracleMulticlass,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            ModelKind::MultiLabel => "multi-label",
            ModelKind::EstimatesPit => "estimates-pit",
            ModelKind::OraclePit => "oracle-pit",
            ModelKind::Combinatorial => "combinatorial",
            ModelKind::OracleMulticlass => "oracle-multiclass",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::MultiLabel => "Multi-label",
            ModelKind::EstimatesPit => "Source estimates (PIT)",
            ModelKind::OraclePit => "Oracle sources (PIT)",
            ModelKind::Combinatorial => "Combinatorial multi-class",
            ModelKind::OracleMulticlass => "Oracle sources (multi-class)",
        }
    }

    pub fn loss(self) -> LossKind {
        match self {
            ModelKind::MultiLabel => LossKind::Bce,
            ModelKind::EstimatesPit | ModelKind::OraclePit => LossKind::Pit,
            ModelKind::Combinatorial | ModelKind::OracleMulticlass => LossKind::Ce,
        }
    }

    /// One logit vector per source rather than per clip.
    pub fn per_source(self) -> bool {
        matches!(
            self,
            ModelKind::EstimatesPit | ModelKind::OraclePit | ModelKind::OracleMulticlass
        )
    }

    /// Models with an OpenMax path and the squashing it uses.
    pub fn openmax_squash(self) -> Option<OutputSquash> {
        match self {
            ModelKind::MultiLabel => Some(OutputSquash::Sigmoid),
            ModelKind::OraclePit | ModelKind::OracleMulticlass => Some(OutputSquash::Softmax),
            ModelKind::EstimatesPit | ModelKind::Combinatorial => None,
        }
    }

    /// OpenMax results that appear in the report; the multi-label path is
    /// computed but treated as experimental.
    pub fn openmax_reported(self) -> bool {
        matches!(self, ModelKind::OraclePit | ModelKind::OracleMulticlass)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.slug() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.slug()).collect();
                format!("unknown model '{s}' (expected one of {})", names.join(", "))
            })
    }
}

/// Maps global class ids to output indices of the known-class head.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownIndex {
    pub classes: Vec<ClassId>,
    local: Vec<Option<usize>>,
}

impl KnownIndex {
    pub fn new(split: &ClassSplit) -> Self {
        let classes = split.known_classes();
        let mut local = vec![None; split.n_classes()];
        for (i, &c) in classes.iter().enumerate() {
            local[c] = Some(i);
        }
        Self { classes, local }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn local(&self, class: ClassId) -> Option<usize> {
        self.local.get(class).copied().flatten()
    }

    pub fn contains_unknown(&self, labels: &[ClassId]) -> bool {
        labels.iter().any(|&c| self.local(c).is_none())
    }

    /// Known labels of a clip in head order; unknown classes are dropped.
    pub fn local_labels(&self, labels: &[ClassId]) -> Vec<usize> {
        let mut out: Vec<usize> = labels.iter().filter_map(|&c| self.local(c)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn require(&self, class: ClassId) -> Result<usize, ClassifierError> {
        self.local(class).ok_or(ClassifierError::ClassOutOfRange {
            class,
            n: self.len(),
        })
    }
}

/// Feature vectors the model sees for one clip.
pub fn clip_inputs(kind: ModelKind, clip: &RenderedClip) -> Vec<Vec<f64>> {
    match kind {
        ModelKind::MultiLabel | ModelKind::Combinatorial => vec![clip.mixture.clone()],
        ModelKind::EstimatesPit => clip.pruned_estimates().into_iter().map(<[f64]>::to_vec).collect(),
        ModelKind::OraclePit | ModelKind::OracleMulticlass => {
            clip.oracle.iter().map(|s| s.vector.clone()).collect()
        }
    }
}

/// Builds training samples. Clips whose label set is missing from `combos`
/// are skipped for the combinatorial model; the skip count is returned.
pub fn build_samples(
    kind: ModelKind,
    clips: &[RenderedClip],
    known: &KnownIndex,
    combos: Option<&ComboVocabulary>,
) -> Result<(Vec<Sample>, usize), ClassifierError> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for clip in clips {
        match kind {
            ModelKind::MultiLabel => {
                let labels = clip
                    .labels
                    .iter()
                    .map(|&c| known.require(c))
                    .collect::<Result<Vec<_>, _>>()?;
                out.push(Sample::single(clip.mixture.clone(), labels));
            }
            ModelKind::EstimatesPit | ModelKind::OraclePit => {
                let labels = clip
                    .source_classes()
                    .iter()
                    .map(|&c| known.require(c))
                    .collect::<Result<Vec<_>, _>>()?;
                out.push(Sample {
                    inputs: clip_inputs(kind, clip),
                    labels,
                });
            }
            ModelKind::Combinatorial => {
                let labels = clip
                    .labels
                    .iter()
                    .map(|&c| known.require(c))
                    .collect::<Result<Vec<_>, _>>()?;
                let vocab = combos.ok_or_else(|| {
                    ClassifierError::InvalidConfig("combinatorial model needs a vocabulary".into())
                })?;
                match vocab.encode(&labels) {
                    Ok(id) => out.push(Sample::single(clip.mixture.clone(), vec![id])),
                    Err(ClassifierError::OutOfVocabulary(_)) => skipped += 1,
                    Err(e) => return Err(e),
                }
            }
            ModelKind::OracleMulticlass => {
                for s in &clip.oracle {
                    out.push(Sample::single(s.vector.clone(), vec![known.require(s.class_id)?]));
                }
            }
        }
    }
    Ok((out, skipped))
}

/// Label-set vocabulary of the combinatorial model, from training clips.
pub fn combo_vocabulary(
    clips: &[RenderedClip],
    known: &KnownIndex,
) -> Result<ComboVocabulary, ClassifierError> {
    let sets: Vec<Vec<usize>> = clips.iter().map(|c| known.local_labels(&c.labels)).collect();
    ComboVocabulary::build(sets.iter().map(Vec::as_slice))
}

/// Logits for every input of a clip.
pub fn clip_logits(
    kind: ModelKind,
    params: &MlpParams,
    clip: &RenderedClip,
) -> Result<Vec<Vec<f64>>, ClassifierError> {
    clip_inputs(kind, clip)
        .iter()
        .map(|x| params.forward(x))
        .collect()
}

fn probabilities(kind: ModelKind, logits: &[Vec<f64>]) -> Vec<Vec<f64>> {
    logits
        .iter()
        .map(|v| match kind {
            ModelKind::MultiLabel => v.iter().map(|&x| sigmoid(x)).collect(),
            _ => softmax(v),
        })
        .collect()
}

pub fn msp_unknown(kind: ModelKind, logits: &[Vec<f64>], delta: f64) -> Result<bool, OpenSetError> {
    let probs = probabilities(kind, logits);
    let d = if kind.per_source() {
        decide_msp_per_source(&probs, delta)?
    } else {
        decide_msp(probs.first().ok_or(OpenSetError::Empty)?, delta)?
    };
    Ok(d.unknown)
}

pub fn openmax_unknown(
    kind: ModelKind,
    logits: &[Vec<f64>],
    models: &[WeibullTailModel],
    config: &OpenMaxConfig,
) -> Result<bool, OpenSetError> {
    let squash = kind.openmax_squash().ok_or_else(|| {
        OpenSetError::InvalidConfig(format!("{kind} has no OpenMax path"))
    })?;
    let d = if kind.per_source() {
        decide_openmax_per_source(logits, models, config, squash)?
    } else {
        decide_openmax(logits.first().ok_or(OpenSetError::Empty)?, models, config, squash)?
    };
    Ok(d.unknown)
}

/// Predicted known-class set and per-class ranking scores.
///
/// Multi-label: top-`m` outputs and sigmoid scores. Per-source models: the
/// union of per-source argmaxes, scored by the largest softmax output over
/// sources. Combinatorial: the label set of the top output, scored by the
/// summed probability of every label set containing the class.
pub fn closed_set_output(
    kind: ModelKind,
    logits: &[Vec<f64>],
    m: usize,
    n_known: usize,
    combos: Option<&ComboVocabulary>,
) -> (Vec<usize>, Vec<f64>) {
    let probs = probabilities(kind, logits);
    match kind {
        ModelKind::MultiLabel => (predict_topm(&logits[0], m), probs[0].clone()),
        ModelKind::Combinatorial => {
            let vocab = combos.expect("combinatorial model carries its vocabulary");
            let predicted = vocab
                .decode(argmax(&logits[0]))
                .map(<[usize]>::to_vec)
                .unwrap_or_default();
            let mut scores = vec![0.0; n_known];
            for (p, combo) in probs[0].iter().zip(vocab.combos()) {
                for &j in combo {
                    scores[j] += p;
                }
            }
            (predicted, scores)
        }
        _ => {
            let mut predicted: Vec<usize> = logits.iter().map(|v| argmax(v)).collect();
            predicted.sort_unstable();
            predicted.dedup();
            let mut scores = vec![0.0f64; n_known];
            for p in &probs {
                for (s, &x) in scores.iter_mut().zip(p) {
                    *s = s.max(x);
                }
            }
            (predicted, scores)
        }
    }
}

/// Correctly classified training activations, keyed by head output index.
///
/// Multi-class: the source's argmax is its class. PIT: the argmax matches
/// the label the best assignment gives that source. Multi-label: every
/// positive class ranked within the top `m`.
pub fn activation_records(
    kind: ModelKind,
    logits: &[Vec<f64>],
    clip: &RenderedClip,
    known: &KnownIndex,
) -> Result<Vec<ActivationRecord>, ClassifierError> {
    let mut out = Vec::new();
    match kind {
        ModelKind::MultiLabel => {
            let positives = known.local_labels(&clip.labels);
            for class in qualifying_classes_multilabel(&logits[0], &positives, clip.m) {
                out.push(ActivationRecord {
                    class,
                    activation: logits[0].clone(),
                });
            }
        }
        ModelKind::OracleMulticlass => {
            for (v, s) in logits.iter().zip(&clip.oracle) {
                let class = known.require(s.class_id)?;
                if qualifies_multiclass(v, class) {
                    out.push(ActivationRecord {
                        class,
                        activation: v.clone(),
                    });
                }
            }
        }
        ModelKind::OraclePit | ModelKind::EstimatesPit => {
            let labels = clip
                .source_classes()
                .iter()
                .map(|&c| known.require(c))
                .collect::<Result<Vec<_>, _>>()?;
            let matched = pit_loss(logits, &labels)?;
            for (i, &src) in matched.assignment.iter().enumerate() {
                if qualifies_multiclass(&logits[src], labels[i]) {
                    out.push(ActivationRecord {
                        class: labels[i],
                        activation: logits[src].clone(),
                    });
                }
            }
        }
        ModelKind::Combinatorial => {
            return Err(ClassifierError::InvalidConfig(
                "combinatorial model has no per-class activations".into(),
            ))
        }
    }
    Ok(out)
}
