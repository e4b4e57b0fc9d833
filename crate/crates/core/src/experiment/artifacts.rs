//! On-disk forms of datasets, checkpoints and tail models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::models::ModelKind;
use super::ExperimentError;
use crate::binfmt::{read_with_sidecar, write_with_sidecar, TensorFile};
use crate::classifier::{ComboVocabulary, Dense, EpochLog, LossKind, MlpParams};
use crate::dataset_plan::{ClassId, Pool};
use crate::openset::{ClassTail, TailCalibration, WeibullTailModel};
use crate::synth_features::{Estimate, EstimateSet, RenderedClip, SourceFeature};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSlot {
    pub row: usize,
    pub class_id: ClassId,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSlot {
    pub row: usize,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub id: String,
    pub soundscape_id: String,
    pub labels: Vec<ClassId>,
    pub m: usize,
    pub mixture_row: usize,
    pub oracle: Vec<SourceSlot>,
    pub estimates: Vec<EstimateSlot>,
}

/// Sidecar of a feature file: every clip and the rows holding its vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub pool: Pool,
    pub dim: usize,
    pub clips: Vec<ClipEntry>,
}

pub fn save_dataset(
    path: &Path,
    pool: Pool,
    dim: usize,
    clips: &[RenderedClip],
) -> Result<(), ExperimentError> {
    let mut t = TensorFile::new(dim);
    let mut entries = Vec::with_capacity(clips.len());
    for c in clips {
        let mixture_row = t.push_row(&c.mixture)?;
        let oracle = c
            .oracle
            .iter()
            .map(|s| {
                Ok(SourceSlot {
                    row: t.push_row(&s.vector)?,
                    class_id: s.class_id,
                    energy: s.energy,
                })
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        let estimates = c
            .estimates
            .estimates
            .iter()
            .map(|e| {
                Ok(EstimateSlot {
                    row: t.push_row(&e.vector)?,
                    energy: e.energy,
                })
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        entries.push(ClipEntry {
            id: c.id.clone(),
            soundscape_id: c.soundscape_id.clone(),
            labels: c.labels.clone(),
            m: c.m,
            mixture_row,
            oracle,
            estimates,
        });
    }
    let index = DatasetIndex {
        pool,
        dim,
        clips: entries,
    };
    Ok(write_with_sidecar(path, &t, &index)?)
}

pub fn load_dataset(path: &Path) -> Result<Vec<RenderedClip>, ExperimentError> {
    let (t, index): (TensorFile, DatasetIndex) = read_with_sidecar(path)?;
    let corrupt = |what: String| ExperimentError::Corrupt {
        path: path.to_path_buf(),
        detail: what,
    };
    if t.dim != index.dim {
        return Err(corrupt(format!("dim {} vs sidecar {}", t.dim, index.dim)));
    }
    let rows = t.rows();
    let row = |r: usize| {
        if r < rows {
            Ok(t.row(r))
        } else {
            Err(corrupt(format!("row {r} out of {rows}")))
        }
    };
    index
        .clips
        .into_iter()
        .map(|e| {
            Ok(RenderedClip {
                mixture: row(e.mixture_row)?,
                oracle: e
                    .oracle
                    .iter()
                    .map(|s| {
                        Ok(SourceFeature {
                            vector: row(s.row)?,
                            energy: s.energy,
                            class_id: s.class_id,
                        })
                    })
                    .collect::<Result<_, ExperimentError>>()?,
                estimates: EstimateSet {
                    estimates: e
                        .estimates
                        .iter()
                        .map(|s| {
                            Ok(Estimate {
                                vector: row(s.row)?,
                                energy: s.energy,
                            })
                        })
                        .collect::<Result<_, ExperimentError>>()?,
                },
                id: e.id,
                soundscape_id: e.soundscape_id,
                labels: e.labels,
                m: e.m,
            })
        })
        .collect()
}

/// Sidecar of a checkpoint; the tensor holds all parameters as one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelKind,
    pub loss: LossKind,
    /// `(outputs, inputs)` of every layer.
    pub shapes: Vec<(usize, usize)>,
    /// Global class id of each output (combinatorial: label-set vocabulary).
    pub known_classes: Vec<ClassId>,
    pub combos: Option<ComboVocabulary>,
    pub epoch: usize,
    pub val_loss: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub val_skipped: usize,
    pub history: Vec<EpochLog>,
}

pub fn save_checkpoint(
    path: &Path,
    params: &MlpParams,
    meta: &CheckpointMeta,
) -> Result<(), ExperimentError> {
    let mut t = TensorFile::new(params.n_params());
    t.push_flat(params.values().copied());
    Ok(write_with_sidecar(path, &t, meta)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpParams, CheckpointMeta), ExperimentError> {
    let (t, meta): (TensorFile, CheckpointMeta) = read_with_sidecar(path)?;
    let mut params = MlpParams {
        layers: meta
            .shapes
            .iter()
            .map(|&(o, i)| Dense::zeros(i, o))
            .collect(),
    };
    if t.rows() != 1 || t.dim != params.n_params() {
        return Err(ExperimentError::Corrupt {
            path: path.to_path_buf(),
            detail: format!(
                "expected one row of {} parameters, found {} x {}",
                params.n_params(),
                t.rows(),
                t.dim
            ),
        });
    }
    for (p, &x) in params.values_mut().zip(&t.data) {
        *p = f64::from(x);
    }
    Ok((params, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationClass {
    pub class_id: usize,
    /// Row of the MAV in the tensor file.
    pub mav_row: usize,
    pub count: usize,
    /// Distances to the MAV, descending.
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMeta {
    pub model: ModelKind,
    pub max_tau: usize,
    pub classes: Vec<CalibrationClass>,
}

pub fn save_calibration(
    path: &Path,
    model: ModelKind,
    cal: &TailCalibration,
) -> Result<(), ExperimentError> {
    let dim = cal.classes.first().map_or(0, |c| c.mav.len());
    let mut t = TensorFile::new(dim);
    let mut classes = Vec::new();
    for c in &cal.classes {
        classes.push(CalibrationClass {
            class_id: c.class_id,
            mav_row: t.push_row(&c.mav)?,
            count: c.distances.len(),
            distances: c.distances.clone(),
        });
    }
    let meta = CalibrationMeta {
        model,
        max_tau: cal.max_tau(),
        classes,
    };
    Ok(write_with_sidecar(path, &t, &meta)?)
}

pub fn load_calibration(path: &Path) -> Result<TailCalibration, ExperimentError> {
    let (t, meta): (TensorFile, CalibrationMeta) = read_with_sidecar(path)?;
    Ok(TailCalibration {
        classes: meta
            .classes
            .into_iter()
            .map(|c| ClassTail {
                class_id: c.class_id,
                mav: t.row(c.mav_row),
                distances: c.distances,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailModelEntry {
    pub class_id: usize,
    pub mav_row: usize,
    pub kappa: f64,
    pub sigma: f64,
    pub tau: usize,
}

pub fn save_tail_models(path: &Path, models: &[WeibullTailModel]) -> Result<(), ExperimentError> {
    let dim = models.first().map_or(0, |m| m.mav.len());
    let mut t = TensorFile::new(dim);
    let mut entries = Vec::new();
    for m in models {
        entries.push(TailModelEntry {
            class_id: m.class_id,
            mav_row: t.push_row(&m.mav)?,
            kappa: m.kappa,
            sigma: m.sigma,
            tau: m.tau,
        });
    }
    Ok(write_with_sidecar(path, &t, &entries)?)
}

pub fn load_tail_models(path: &Path) -> Result<Vec<WeibullTailModel>, ExperimentError> {
    let (t, entries): (TensorFile, Vec<TailModelEntry>) = read_with_sidecar(path)?;
    Ok(entries
        .into_iter()
        .map(|e| WeibullTailModel {
            class_id: e.class_id,
            mav: t.row(e.mav_row),
            kappa: e.kappa,
            sigma: e.sigma,
            tau: e.tau,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::TrainConfig;
    use rand::SeedableRng;

    #[test]
    fn checkpoint_round_trip_to_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let params = MlpParams::init(4, &[3], 2, &mut rng);
        let meta = CheckpointMeta {
            model: ModelKind::OracleMulticlass,
            loss: TrainConfig::default().loss,
            shapes: params.shapes(),
            known_classes: vec![3, 7],
            combos: None,
            epoch: 2,
            val_loss: 0.5,
            n_train: 1,
            n_val: 1,
            val_skipped: 0,
            history: vec![],
        };
        save_checkpoint(&path, &params, &meta).unwrap();
        let (back, meta2) = load_checkpoint(&path).unwrap();
        assert_eq!(meta2, meta);
        for (a, b) in params.values().zip(back.values()) {
            assert_eq!(*b, f64::from(*a as f32));
        }
    }
}
