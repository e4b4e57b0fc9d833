//! Class vocabularies, known/unknown split variants, and soundscape/clip
//! specs.
//!
//! Nothing here renders audio: a soundscape is a list of timed events, and a
//! clip is a 1 s window centred on one event together with the label set of
//! every event it overlaps.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{rng_for, stream};

pub type ClassId = usize;

/// Length of every clip window, seconds.
pub const CLIP_LENGTH: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("openness needs 1 <= c_tr <= c_te, got c_tr={c_tr}, c_te={c_te}")]
    InvalidOpenness { c_tr: usize, c_te: usize },
    #[error("vocabulary weights invalid: {0}")]
    InvalidWeights(String),
    #[error("need at least 3 subsets, got {0}")]
    TooFewSubsets(usize),
    #[error("vocabulary of {classes} classes cannot fill {subsets} subsets")]
    VocabularyTooSmall { classes: usize, subsets: usize },
    #[error("requested {n} soundscapes but need at least {needed} event slots for {classes} classes x {min} minimum, got {slots}")]
    TooFewExamples {
        n: usize,
        slots: usize,
        needed: usize,
        classes: usize,
        min: usize,
    },
    #[error("invalid soundscape configuration: {0}")]
    InvalidConfig(String),
}

/// Ordered class list with relative frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassVocabulary {
    weights: Vec<f64>,
}

impl ClassVocabulary {
    pub fn uniform(n: usize) -> Result<Self, PlanError> {
        Self::from_weights(vec![1.0; n])
    }

    /// Zipf-like weights `1 / (rank + 1)^exponent`, emulating an imbalanced
    /// source collection.
    pub fn power_law(n: usize, exponent: f64) -> Result<Self, PlanError> {
        Self::from_weights((0..n).map(|i| 1.0 / ((i + 1) as f64).powf(exponent)).collect())
    }

    /// Normalises `weights` to sum to one.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, PlanError> {
        if weights.is_empty() {
            return Err(PlanError::InvalidWeights("empty vocabulary".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(PlanError::InvalidWeights(format!(
                "weight {w} is not finite and positive"
            )));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> {
        0..self.weights.len()
    }

    pub fn weight(&self, class: ClassId) -> f64 {
        self.weights[class]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpennessMode {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubsetTag {
    /// Known class, in the training vocabulary.
    KK,
    /// Unknown class that is seen during training.
    KU,
    /// Unknown class seen only at test time.
    UU,
}

/// Openness of a train/test class configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpennessReport {
    pub c_tr: usize,
    pub c_te: usize,
    pub o_star: f64,
}

/// `1 - sqrt(2 c_tr / (c_tr + c_te))`.
pub fn compute_openness(c_tr: usize, c_te: usize) -> Result<OpennessReport, PlanError> {
    if c_tr == 0 || c_tr > c_te {
        return Err(PlanError::InvalidOpenness { c_tr, c_te });
    }
    let ratio = (2 * c_tr) as f64 / (c_tr + c_te) as f64;
    Ok(OpennessReport {
        c_tr,
        c_te,
        o_star: 1.0 - ratio.sqrt(),
    })
}

/// Assignment of vocabulary classes to KK/KU/UU for one dataset variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub variant_id: usize,
    pub subsets: Vec<Vec<ClassId>>,
    pub assignment: Vec<SubsetTag>,
    pub openness_mode: OpennessMode,
}

impl ClassSplit {
    fn classes_where(&self, keep: impl Fn(SubsetTag) -> bool) -> Vec<ClassId> {
        let mut out: Vec<ClassId> = self
            .subsets
            .iter()
            .zip(&self.assignment)
            .filter(|(_, t)| keep(**t))
            .flat_map(|(s, _)| s.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Training-visible classes (KK and KU), sorted.
    pub fn known_classes(&self) -> Vec<ClassId> {
        self.classes_where(|t| t != SubsetTag::UU)
    }

    /// Classes only seen at test time, sorted.
    pub fn unknown_classes(&self) -> Vec<ClassId> {
        self.classes_where(|t| t == SubsetTag::UU)
    }

    pub fn n_classes(&self) -> usize {
        self.subsets.iter().map(Vec::len).sum()
    }

    pub fn tag_of(&self, class: ClassId) -> Option<SubsetTag> {
        self.subsets
            .iter()
            .position(|s| s.contains(&class))
            .map(|i| self.assignment[i])
    }

    pub fn openness(&self) -> OpennessReport {
        compute_openness(self.known_classes().len(), self.n_classes())
            .expect("a valid split always has at least one known class")
    }
}

/// Tag pattern of the first variant: `n - 2` KK subsets followed by KU, UU
/// (low openness) or UU, UU (high openness).
pub fn split_pattern(n_subsets: usize, mode: OpennessMode) -> Vec<SubsetTag> {
    let mut pattern = vec![SubsetTag::KK; n_subsets.saturating_sub(2)];
    match mode {
        OpennessMode::Low => pattern.extend([SubsetTag::KU, SubsetTag::UU]),
        OpennessMode::High => pattern.extend([SubsetTag::UU, SubsetTag::UU]),
    }
    pattern
}

/// Sizes of `k` near-equal blocks of `n`, larger blocks first.
pub fn partition_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// One split per subset rotation: variant `v` shifts the base pattern `v`
/// places to the right, so every subset takes every tag exactly once.
pub fn make_split_variants(
    vocab: &ClassVocabulary,
    n_subsets: usize,
    mode: OpennessMode,
) -> Result<Vec<ClassSplit>, PlanError> {
    if n_subsets < 3 {
        return Err(PlanError::TooFewSubsets(n_subsets));
    }
    if vocab.len() < n_subsets {
        return Err(PlanError::VocabularyTooSmall {
            classes: vocab.len(),
            subsets: n_subsets,
        });
    }
    let mut subsets = Vec::with_capacity(n_subsets);
    let mut next = 0;
    for size in partition_sizes(vocab.len(), n_subsets) {
        subsets.push((next..next + size).collect::<Vec<_>>());
        next += size;
    }
    let pattern = split_pattern(n_subsets, mode);
    Ok((0..n_subsets)
        .map(|v| ClassSplit {
            variant_id: v + 1,
            subsets: subsets.clone(),
            assignment: (0..n_subsets)
                .map(|s| pattern[(s + n_subsets - v) % n_subsets])
                .collect(),
            openness_mode: mode,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    Train,
    Val,
    Test,
    Tuning,
}

impl Pool {
    pub const ALL: [Pool; 4] = [Pool::Train, Pool::Val, Pool::Test, Pool::Tuning];

    pub fn name(self) -> &'static str {
        match self {
            Pool::Train => "train",
            Pool::Val => "val",
            Pool::Test => "test",
            Pool::Tuning => "tuning",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }

    /// Test and tuning pools draw from the full vocabulary.
    pub fn includes_unknown(self) -> bool {
        matches!(self, Pool::Test | Pool::Tuning)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    #[serde(rename = "class")]
    pub class_id: ClassId,
    pub onset: f64,
    pub duration: f64,
    #[serde(rename = "pitch")]
    pub pitch_shift: f64,
    #[serde(rename = "stretch")]
    pub time_stretch: f64,
}

fn default_soundscape_duration() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundscapeSpec {
    pub id: String,
    /// Not serialized; restored from the run configuration on load.
    #[serde(skip, default = "default_soundscape_duration")]
    pub duration: f64,
    pub events: Vec<EventSpec>,
}

impl SoundscapeSpec {
    /// Active interval of event `i`, truncated at the soundscape end.
    pub fn event_support(&self, i: usize) -> (f64, f64) {
        let e = &self.events[i];
        (e.onset, (e.onset + e.duration).min(self.duration))
    }
}

/// Timing and augmentation ranges for soundscape generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoundscapeConfig {
    pub duration: f64,
    pub max_onset: f64,
    pub max_polyphony: usize,
    pub event_duration: (f64, f64),
    pub pitch_range: f64,
    pub stretch_range: (f64, f64),
    /// Per-class minimum event count; `None` scales 200 per 200k soundscapes.
    pub min_per_class: Option<usize>,
}

impl Default for SoundscapeConfig {
    fn default() -> Self {
        Self {
            duration: 10.0,
            max_onset: 9.0,
            max_polyphony: 4,
            event_duration: (0.5, 4.0),
            pitch_range: 2.0,
            stretch_range: (0.8, 1.2),
            min_per_class: None,
        }
    }
}

impl SoundscapeConfig {
    fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::InvalidConfig(m.to_string()));
        if !(self.duration >= CLIP_LENGTH) {
            return bad("duration must be at least one clip length");
        }
        if !(0.0..self.duration).contains(&self.max_onset) {
            return bad("max_onset must lie in [0, duration)");
        }
        if self.max_polyphony == 0 || self.max_polyphony > 4 {
            return bad("max_polyphony must be in 1..=4");
        }
        let (lo, hi) = self.event_duration;
        if !(lo > 0.0 && lo <= hi) {
            return bad("event_duration must be a positive ordered range");
        }
        let (lo, hi) = self.stretch_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad("stretch_range must be a positive ordered range");
        }
        if !(self.pitch_range >= 0.0) {
            return bad("pitch_range must be nonnegative");
        }
        Ok(())
    }

    pub fn min_examples(&self, n: usize) -> usize {
        self.min_per_class.unwrap_or_else(|| default_min_per_class(n))
    }
}

/// `ceil(200 * n / 200_000)`: the 200-per-class floor rescaled to `n`
/// soundscapes.
pub fn default_min_per_class(n: usize) -> usize {
    (200 * n).div_ceil(200_000)
}

/// Largest-remainder allocation of `total` slots: `min` each, the rest
/// proportional to `weights`.
fn allocate_counts(weights: &[f64], total: usize, min: usize) -> Vec<usize> {
    let spare = total - min * weights.len();
    let wsum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / wsum * spare as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(spare - assigned) {
        counts[i] += 1;
    }
    counts.iter().map(|c| c + min).collect()
}

/// Draws `n` soundscapes for `pool`.
///
/// Timing and augmentations are drawn per soundscape from a stream keyed by
/// the soundscape index. Class labels are then dealt from a shuffled deck
/// holding `min` copies of each eligible class plus a weight-proportional
/// share of the remaining slots.
pub fn sample_soundscape_specs(
    split: &ClassSplit,
    vocab: &ClassVocabulary,
    n: usize,
    pool: Pool,
    config: &SoundscapeConfig,
    seed: u64,
) -> Result<Vec<SoundscapeSpec>, PlanError> {
    config.validate()?;
    if n == 0 {
        return Err(PlanError::InvalidConfig("need at least one soundscape".into()));
    }
    let eligible: Vec<ClassId> = if pool.includes_unknown() {
        (0..split.n_classes()).collect()
    } else {
        split.known_classes()
    };

    let mut specs: Vec<SoundscapeSpec> = (0..n)
        .map(|i| {
            let mut rng = rng_for(seed, &[stream::SOUNDSCAPE, pool.tag(), i as u64]);
            let polyphony = rng.random_range(1..=config.max_polyphony);
            let events = (0..polyphony)
                .map(|_| EventSpec {
                    class_id: usize::MAX,
                    onset: rng.random_range(0.0..=config.max_onset),
                    duration: rng.random_range(config.event_duration.0..=config.event_duration.1),
                    pitch_shift: rng.random_range(-config.pitch_range..=config.pitch_range),
                    time_stretch: rng
                        .random_range(config.stretch_range.0..=config.stretch_range.1),
                })
                .collect();
            SoundscapeSpec {
                id: format!("{}-{:06}", pool.name(), i),
                duration: config.duration,
                events,
            }
        })
        .collect();

    let slots: usize = specs.iter().map(|s| s.events.len()).sum();
    let min = config.min_examples(n);
    let needed = min * eligible.len();
    if slots < needed {
        return Err(PlanError::TooFewExamples {
            n,
            slots,
            needed,
            classes: eligible.len(),
            min,
        });
    }
    let weights: Vec<f64> = eligible.iter().map(|&c| vocab.weight(c)).collect();
    let counts = allocate_counts(&weights, slots, min);
    let mut deck: Vec<ClassId> = eligible
        .iter()
        .zip(&counts)
        .flat_map(|(&c, &k)| std::iter::repeat_n(c, k))
        .collect();
    deck.shuffle(&mut rng_for(seed, &[stream::PLAN, pool.tag()]));

    let mut deck = deck.into_iter();
    for event in specs.iter_mut().flat_map(|s| s.events.iter_mut()) {
        event.class_id = deck.next().expect("deck holds exactly one class per slot");
    }
    Ok(specs)
}

/// One 1 s clip cut from a soundscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    pub id: String,
    pub soundscape_id: String,
    pub window: [f64; 2],
    /// Sorted, distinct classes present in the window.
    pub labels: Vec<ClassId>,
    /// Number of events overlapping the window.
    pub m: usize,
    /// Indices of the overlapping events in the parent soundscape.
    #[serde(skip)]
    pub events: Vec<usize>,
}

/// Positive-measure overlap of two closed intervals.
pub fn overlaps(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0.max(b.0) < a.1.min(b.1)
}

/// Window of `CLIP_LENGTH` centred on `center`, shifted to lie in
/// `[0, duration]`.
pub fn clamp_window(center: f64, duration: f64) -> [f64; 2] {
    let half = CLIP_LENGTH / 2.0;
    if duration <= CLIP_LENGTH {
        return [0.0, duration];
    }
    let start = (center - half).clamp(0.0, duration - CLIP_LENGTH);
    [start, start + CLIP_LENGTH]
}

/// One clip per event, centred on the event.
pub fn window_clips(spec: &SoundscapeSpec) -> Vec<ClipSpec> {
    (0..spec.events.len())
        .map(|i| {
            let (s, e) = spec.event_support(i);
            let window = clamp_window((s + e) / 2.0, spec.duration);
            let events: Vec<usize> = (0..spec.events.len())
                .filter(|&j| overlaps(spec.event_support(j), (window[0], window[1])))
                .collect();
            let labels: BTreeSet<ClassId> =
                events.iter().map(|&j| spec.events[j].class_id).collect();
            ClipSpec {
                id: format!("{}-{:02}", spec.id, i),
                soundscape_id: spec.id.clone(),
                window,
                labels: labels.into_iter().collect(),
                m: events.len(),
                events,
            }
        })
        .collect()
}
