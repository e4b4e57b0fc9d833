//! Feature-space stand-in for the audio front end.
//!
//! Each class owns a unit-norm prototype. A rendered event is its prototype
//! plus Gaussian jitter that grows with the event's augmentation; a clip
//! mixture is the energy-weighted mean of the sources in the window; and a
//! separator's output is modelled by [`corrupt_estimates`], which leaks
//! energy between sources, adds noise, and pads with low-energy noise
//! channels up to [`N_ESTIMATES`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_plan::{overlaps, window_clips, ClassId, EventSpec, Pool, SoundscapeSpec};
use crate::seed::{rng_for, stream};

/// Number of channels a separator emits.
pub const N_ESTIMATES: usize = 8;

/// Rejections allowed per prototype before giving up.
const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("prototype dimension must be at least 2, got {0}")]
    DimTooSmall(usize),
    #[error("cannot place prototype {class} with separation {min_separation} after {attempts} attempts; the floor is infeasible for {n_classes} classes in {dim} dimensions")]
    Infeasible {
        class: usize,
        n_classes: usize,
        dim: usize,
        min_separation: f64,
        attempts: usize,
    },
    #[error("class {0} has no prototype")]
    UnknownClass(ClassId),
    #[error("mixture needs 1 to 4 sources, got {0}")]
    BadSourceCount(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    pub dim: usize,
    pub prototypes: Vec<Vec<f64>>,
    pub jitter_scale: f64,
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

/// Rejection-samples `n_classes` unit prototypes whose pairwise cosine
/// distance `1 - cos` is at least `min_separation`.
pub fn init_prototypes(
    n_classes: usize,
    dim: usize,
    min_separation: f64,
    seed: u64,
) -> Result<PrototypeBank, SynthError> {
    if dim < 2 {
        return Err(SynthError::DimTooSmall(dim));
    }
    let mut rng = rng_for(seed, &[stream::PROTOTYPES]);
    let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let mut attempts = 0;
        let accepted = loop {
            if attempts == MAX_REJECTIONS {
                return Err(SynthError::Infeasible {
                    class,
                    n_classes,
                    dim,
                    min_separation,
                    attempts,
                });
            }
            attempts += 1;
            let candidate = unit_gaussian(&mut rng, dim);
            if prototypes
                .iter()
                .all(|p| 1.0 - dot(p, &candidate) >= min_separation)
            {
                break candidate;
            }
        };
        prototypes.push(accepted);
    }
    Ok(PrototypeBank {
        dim,
        prototypes,
        jitter_scale: 0.0,
    })
}

impl PrototypeBank {
    pub fn with_jitter_scale(mut self, jitter_scale: f64) -> Self {
        self.jitter_scale = jitter_scale;
        self
    }

    pub fn n_classes(&self) -> usize {
        self.prototypes.len()
    }

    /// Jitter standard deviation for an event: `jitter_scale` at maximal
    /// augmentation (|pitch| = 2, |stretch - 1| = 0.2), a third of it at none.
    pub fn jitter_std(&self, pitch_shift: f64, time_stretch: f64) -> f64 {
        self.jitter_scale * (1.0 + pitch_shift.abs() / 2.0 + (time_stretch - 1.0).abs() / 0.2)
            / 3.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFeature {
    pub vector: Vec<f64>,
    pub energy: f64,
    pub class_id: ClassId,
}

/// Renders one event as prototype + jitter with a log-uniform energy drawn
/// from `energy_range`.
pub fn render_source(
    event: &EventSpec,
    bank: &PrototypeBank,
    energy_range: (f64, f64),
    seed: u64,
) -> Result<SourceFeature, SynthError> {
    let proto = bank
        .prototypes
        .get(event.class_id)
        .ok_or(SynthError::UnknownClass(event.class_id))?;
    let (lo, hi) = energy_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(SynthError::InvalidParameter(format!(
            "energy range ({lo}, {hi}) must be positive and ordered"
        )));
    }
    let mut rng = rng_for(seed, &[stream::RENDER]);
    let std = bank.jitter_std(event.pitch_shift, event.time_stretch);
    let vector = if std > 0.0 {
        let noise = Normal::new(0.0, std).expect("std is finite and positive");
        proto.iter().map(|p| p + noise.sample(&mut rng)).collect()
    } else {
        proto.clone()
    };
    let energy = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
    Ok(SourceFeature {
        vector,
        energy,
        class_id: event.class_id,
    })
}

fn add_noise(v: &mut [f64], std: f64, rng: &mut ChaCha8Rng) {
    if std > 0.0 {
        let noise = Normal::new(0.0, std).expect("std is finite and positive");
        for x in v.iter_mut() {
            *x += noise.sample(rng);
        }
    }
}

/// Energy-weighted mean of the sources plus isotropic noise.
///
/// Sources are accumulated in a canonical order so the result is bitwise
/// independent of the order they are passed in.
pub fn mix(sources: &[SourceFeature], noise_std: f64, seed: u64) -> Result<Vec<f64>, SynthError> {
    if sources.is_empty() || sources.len() > 4 {
        return Err(SynthError::BadSourceCount(sources.len()));
    }
    let mut order: Vec<&SourceFeature> = sources.iter().collect();
    order.sort_by(|a, b| {
        a.energy.total_cmp(&b.energy).then_with(|| {
            a.vector
                .iter()
                .zip(&b.vector)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let total: f64 = order.iter().map(|s| s.energy).sum();
    let dim = sources[0].vector.len();
    let mut out = vec![0.0; dim];
    for s in order {
        let w = s.energy / total;
        for (o, x) in out.iter_mut().zip(&s.vector) {
            *o += w * x;
        }
    }
    add_noise(&mut out, noise_std, &mut rng_for(seed, &[stream::MIX]));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub vector: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    pub estimates: Vec<Estimate>,
}

/// Knobs of the separator stand-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    /// Fraction of each estimate taken from the other sources.
    pub leakage: f64,
    /// Per-coordinate noise std added to every estimate.
    pub noise: f64,
    /// Padding channels get energy below this fraction of the weakest source.
    pub floor_factor: f64,
}

/// Smallest energy multiplier kept for a fully leaked estimate.
const MIN_ENERGY_SCALE: f64 = 1e-3;

/// Simulates an imperfect separator on the oracle sources of one clip.
///
/// Estimate `i < m` is `(1 - b) v_i + b / max(1, m - 1) * sum_{j != i} v_j`
/// plus noise, with energy `(1 - b) E_i`; the remaining channels are pure
/// noise with energy in `(0, floor_factor * min E]`.
pub fn corrupt_estimates(
    oracle: &[SourceFeature],
    corruption: Corruption,
    seed: u64,
) -> Result<EstimateSet, SynthError> {
    let m = oracle.len();
    if m == 0 || m > 4 {
        return Err(SynthError::BadSourceCount(m));
    }
    let Corruption {
        leakage,
        noise,
        floor_factor,
    } = corruption;
    if !(leakage >= 0.0 && noise >= 0.0 && floor_factor > 0.0) {
        return Err(SynthError::InvalidParameter(format!(
            "leakage {leakage} and noise {noise} must be >= 0, floor factor {floor_factor} > 0"
        )));
    }
    let mut rng = rng_for(seed, &[stream::CORRUPT]);
    let dim = oracle[0].vector.len();
    let share = leakage / (m.saturating_sub(1).max(1)) as f64;
    let mut estimates = Vec::with_capacity(N_ESTIMATES);
    for (i, src) in oracle.iter().enumerate() {
        let mut v: Vec<f64> = src.vector.iter().map(|x| (1.0 - leakage) * x).collect();
        for (j, other) in oracle.iter().enumerate() {
            if j != i {
                for (a, b) in v.iter_mut().zip(&other.vector) {
                    *a += share * b;
                }
            }
        }
        add_noise(&mut v, noise, &mut rng);
        estimates.push(Estimate {
            vector: v,
            energy: src.energy * (1.0 - leakage).max(MIN_ENERGY_SCALE),
        });
    }
    let min_energy = oracle.iter().map(|s| s.energy).fold(f64::INFINITY, f64::min);
    while estimates.len() < N_ESTIMATES {
        let mut v = vec![0.0; dim];
        add_noise(&mut v, noise, &mut rng);
        let energy = floor_factor * min_energy * (1.0 - rng.random::<f64>());
        estimates.push(Estimate { vector: v, energy });
    }
    Ok(EstimateSet { estimates })
}

/// Indices of the `m` highest-energy estimates, descending energy, ties to
/// the lower index.
pub fn oracle_prune(estimates: &EstimateSet, m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..estimates.estimates.len()).collect();
    idx.sort_by(|&a, &b| {
        estimates.estimates[b]
            .energy
            .total_cmp(&estimates.estimates[a].energy)
            .then(a.cmp(&b))
    });
    idx.truncate(m);
    idx
}

/// Generation parameters for a rendered dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub dim: usize,
    pub min_separation: f64,
    pub jitter_scale: f64,
    pub energy_range: (f64, f64),
    pub mix_noise: f64,
    pub leakage: f64,
    pub estimate_noise: f64,
    pub floor_factor: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            min_separation: 0.5,
            jitter_scale: 0.3,
            energy_range: (0.1, 1.0),
            mix_noise: 0.02,
            leakage: 0.25,
            estimate_noise: 0.1,
            floor_factor: 0.8,
        }
    }
}

impl SynthConfig {
    pub fn corruption(&self) -> Corruption {
        Corruption {
            leakage: self.leakage,
            noise: self.estimate_noise,
            floor_factor: self.floor_factor,
        }
    }
}

/// Every feature view of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedClip {
    pub id: String,
    pub soundscape_id: String,
    /// Sorted distinct classes in the window.
    pub labels: Vec<ClassId>,
    pub m: usize,
    pub mixture: Vec<f64>,
    /// One per overlapping event, in event order.
    pub oracle: Vec<SourceFeature>,
    pub estimates: EstimateSet,
}

impl RenderedClip {
    /// Per-source classes of the oracle sources (duplicates kept).
    pub fn source_classes(&self) -> Vec<ClassId> {
        self.oracle.iter().map(|s| s.class_id).collect()
    }

    /// Energy-pruned estimate vectors, `m` of them.
    pub fn pruned_estimates(&self) -> Vec<&[f64]> {
        oracle_prune(&self.estimates, self.m)
            .into_iter()
            .map(|i| self.estimates.estimates[i].vector.as_slice())
            .collect()
    }
}

/// Renders every clip of every soundscape in a pool.
///
/// An event's feature is drawn once per soundscape and shared by all clips
/// that contain it; within a clip its energy is scaled by the fraction of
/// the window it covers.
pub fn render_pool(
    specs: &[SoundscapeSpec],
    pool: Pool,
    bank: &PrototypeBank,
    config: &SynthConfig,
    seed: u64,
) -> Result<Vec<RenderedClip>, SynthError> {
    let pool_tag = pool as u64 + 1;
    let mut out = Vec::new();
    for (si, spec) in specs.iter().enumerate() {
        let sources = spec
            .events
            .iter()
            .enumerate()
            .map(|(ei, e)| {
                render_source(
                    e,
                    bank,
                    config.energy_range,
                    crate::seed::derive_seed(seed, &[pool_tag, si as u64, ei as u64]),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (ci, clip) in window_clips(spec).into_iter().enumerate() {
            let window = (clip.window[0], clip.window[1]);
            let oracle: Vec<SourceFeature> = clip
                .events
                .iter()
                .map(|&ei| {
                    let support = spec.event_support(ei);
                    debug_assert!(overlaps(support, window));
                    let covered = support.1.min(window.1) - support.0.max(window.0);
                    let mut s = sources[ei].clone();
                    s.energy *= covered / (window.1 - window.0);
                    s
                })
                .collect();
            let clip_seed = crate::seed::derive_seed(seed, &[pool_tag, si as u64, 1000 + ci as u64]);
            let mixture = mix(&oracle, config.mix_noise, clip_seed)?;
            let estimates = corrupt_estimates(&oracle, config.corruption(), clip_seed)?;
            out.push(RenderedClip {
                id: clip.id,
                soundscape_id: clip.soundscape_id,
                labels: clip.labels,
                m: clip.m,
                mixture,
                oracle,
                estimates,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(class_id: ClassId, pitch: f64, stretch: f64) -> EventSpec {
        EventSpec {
            class_id,
            onset: 0.0,
            duration: 1.0,
            pitch_shift: pitch,
            time_stretch: stretch,
        }
    }

    fn source(vector: Vec<f64>, energy: f64) -> SourceFeature {
        SourceFeature {
            vector,
            energy,
            class_id: 0,
        }
    }

    #[test]
    fn two_prototypes_in_the_plane() {
        let bank = init_prototypes(2, 2, 0.0, 1).unwrap();
        for p in &bank.prototypes {
            assert!((dot(p, p) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn prototype_bank_is_deterministic() {
        assert_eq!(
            init_prototypes(10, 8, 0.3, 5).unwrap(),
            init_prototypes(10, 8, 0.3, 5).unwrap()
        );
    }

    #[test]
    fn infeasible_separation_fails_cleanly() {
        // more than two antipodal-ish points in the plane cannot all be 1.9 apart
        let err = init_prototypes(3, 2, 1.9, 0).unwrap_err();
        assert!(matches!(err, SynthError::Infeasible { class: 2, .. }));
        assert!(init_prototypes(3, 1, 0.0, 0).is_err());
    }

    #[test]
    fn zero_jitter_renders_the_prototype() {
        let bank = init_prototypes(4, 8, 0.2, 3).unwrap();
        let s = render_source(&event(2, 1.0, 1.1), &bank, (0.1, 1.0), 9).unwrap();
        assert_eq!(s.vector, bank.prototypes[2]);
        assert!((0.1..=1.0).contains(&s.energy));
    }

    #[test]
    fn maximal_augmentation_gives_full_jitter() {
        let bank = init_prototypes(1, 4, 0.0, 3).unwrap().with_jitter_scale(0.3);
        assert!((bank.jitter_std(2.0, 1.2) - 0.3).abs() < 1e-12);
        assert!((bank.jitter_std(-2.0, 0.8) - 0.3).abs() < 1e-12);
        assert!((bank.jitter_std(0.0, 1.0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rendering_rejects_unknown_class() {
        let bank = init_prototypes(2, 4, 0.0, 3).unwrap();
        assert_eq!(
            render_source(&event(5, 0.0, 1.0), &bank, (0.1, 1.0), 0),
            Err(SynthError::UnknownClass(5))
        );
    }

    #[test]
    fn mix_identities() {
        let a = source(vec![1.0, 2.0], 2.0);
        let b = source(vec![3.0, -2.0], 2.0);
        assert_eq!(mix(std::slice::from_ref(&a), 0.0, 0).unwrap(), a.vector);
        assert_eq!(mix(&[a.clone(), b.clone()], 0.0, 0).unwrap(), vec![2.0, 0.0]);
        let c = source(vec![3.0, -2.0], 6.0);
        let got = mix(&[a, c], 0.0, 0).unwrap();
        let want = [0.25 * 1.0 + 0.75 * 3.0, 0.25 * 2.0 + 0.75 * -2.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        assert_eq!(mix(&[], 0.0, 0), Err(SynthError::BadSourceCount(0)));
    }

    #[test]
    fn mix_ignores_source_order() {
        let s = vec![
            source(vec![0.1, 0.7, -0.3], 0.3),
            source(vec![0.9, -0.2, 0.4], 1.7),
            source(vec![-0.5, 0.5, 0.25], 0.9),
        ];
        let mut r = s.clone();
        r.reverse();
        assert_eq!(mix(&s, 0.1, 42).unwrap(), mix(&r, 0.1, 42).unwrap());
    }

    #[test]
    fn perfect_separator_returns_oracle() {
        let oracle = vec![source(vec![1.0, 0.0], 0.5), source(vec![0.0, 1.0], 0.9)];
        let est = corrupt_estimates(
            &oracle,
            Corruption {
                leakage: 0.0,
                noise: 0.0,
                floor_factor: 0.5,
            },
            1,
        )
        .unwrap();
        assert_eq!(est.estimates.len(), N_ESTIMATES);
        assert_eq!(est.estimates[0].vector, oracle[0].vector);
        assert_eq!(est.estimates[1].vector, oracle[1].vector);
        assert!(est.estimates[2..].iter().all(|e| e.energy > 0.0 && e.energy <= 0.25));
        assert_eq!(oracle_prune(&est, 2), vec![1, 0]);
    }

    #[test]
    fn full_leakage_swaps_two_sources() {
        let oracle = vec![source(vec![1.0, 0.0], 0.5), source(vec![0.0, 1.0], 0.9)];
        let c = Corruption {
            leakage: 1.0,
            noise: 0.0,
            floor_factor: 0.5,
        };
        let est = corrupt_estimates(&oracle, c, 1).unwrap();
        assert_eq!(est.estimates[0].vector, oracle[1].vector);
        assert_eq!(est.estimates[1].vector, oracle[0].vector);
        assert!(est.estimates.iter().all(|e| e.energy > 0.0));
    }

    #[test]
    fn partial_leakage_mixes_linearly() {
        let oracle = vec![source(vec![1.0, 0.0], 0.5), source(vec![0.0, 1.0], 0.9)];
        let c = Corruption {
            leakage: 0.3,
            noise: 0.0,
            floor_factor: 0.5,
        };
        let est = corrupt_estimates(&oracle, c, 1).unwrap();
        assert!((est.estimates[0].vector[0] - 0.7).abs() < 1e-15);
        assert!((est.estimates[0].vector[1] - 0.3).abs() < 1e-15);
        assert!((est.estimates[0].energy - 0.35).abs() < 1e-15);
        assert!(corrupt_estimates(&[], c, 1).is_err());
    }

    #[test]
    fn pruning_picks_loudest_with_index_ties() {
        let set = |energies: &[f64]| EstimateSet {
            estimates: energies
                .iter()
                .map(|&energy| Estimate {
                    vector: vec![],
                    energy,
                })
                .collect(),
        };
        assert_eq!(oracle_prune(&set(&[5., 1., 1., 1., 1., 1., 1., 9.]), 2), vec![7, 0]);
        assert_eq!(oracle_prune(&set(&[1.0; 8]), 3), vec![0, 1, 2]);
    }
}
