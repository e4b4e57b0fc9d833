use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{bce_grad, bce_loss, ce_grad, ce_loss, pit_loss, LossKind};
use super::mlp::{Gradients, MlpParams};
use super::ClassifierError;
use crate::seed::{rng_for, stream};

/// One training example.
///
/// `Bce`: one input, `labels` are the positive outputs. `Ce`: one input, one
/// label. `Pit`: one input per source and as many labels, order unrelated.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Sample {
    pub fn single(input: Vec<f64>, labels: Vec<usize>) -> Self {
        Self {
            inputs: vec![input],
            labels,
        }
    }
}

fn multi_hot(labels: &[usize], n: usize) -> Result<Vec<f64>, ClassifierError> {
    let mut y = vec![0.0; n];
    for &l in labels {
        *y.get_mut(l)
            .ok_or(ClassifierError::ClassOutOfRange { class: l, n })? = 1.0;
    }
    Ok(y)
}

fn check_arity(sample: &Sample, kind: LossKind) -> Result<(), ClassifierError> {
    let ok = match kind {
        LossKind::Bce => sample.inputs.len() == 1,
        LossKind::Ce => sample.inputs.len() == 1 && sample.labels.len() == 1,
        LossKind::Pit => sample.inputs.len() == sample.labels.len(),
    };
    if ok {
        Ok(())
    } else {
        Err(ClassifierError::ShapeMismatch {
            expected: sample.labels.len(),
            got: sample.inputs.len(),
            context: format!("{kind:?} sample inputs"),
        })
    }
}

/// Loss of one sample; accumulates `scale * gradient` when `grads` is given.
pub fn sample_loss(
    params: &MlpParams,
    sample: &Sample,
    kind: LossKind,
    grads: Option<(&mut Gradients, f64)>,
) -> Result<f64, ClassifierError> {
    check_arity(sample, kind)?;
    let n = params.output_dim();
    match kind {
        LossKind::Bce | LossKind::Ce => {
            let cache = params.forward_cached(&sample.inputs[0])?;
            let (loss, dlogits) = if kind == LossKind::Bce {
                let y = multi_hot(&sample.labels, n)?;
                (bce_loss(&cache.logits, &y)?, bce_grad(&cache.logits, &y))
            } else {
                let k = sample.labels[0];
                (ce_loss(&cache.logits, k)?, ce_grad(&cache.logits, k))
            };
            if let Some((g, scale)) = grads {
                params.backward(&cache, &dlogits, scale, g);
            }
            Ok(loss)
        }
        LossKind::Pit => {
            let caches = sample
                .inputs
                .iter()
                .map(|x| params.forward_cached(x))
                .collect::<Result<Vec<_>, _>>()?;
            let logits: Vec<Vec<f64>> = caches.iter().map(|c| c.logits.clone()).collect();
            let matched = pit_loss(&logits, &sample.labels)?;
            if let Some((g, scale)) = grads {
                for (i, &src) in matched.assignment.iter().enumerate() {
                    let d = ce_grad(&caches[src].logits, sample.labels[i]);
                    params.backward(&caches[src], &d, scale, g);
                }
            }
            Ok(matched.loss)
        }
    }
}

/// Mean loss over `batch` and its gradient. PIT gradients flow through the
/// best assignment of each sample, held fixed.
pub fn compute_gradients(
    params: &MlpParams,
    batch: &[Sample],
    kind: LossKind,
) -> Result<(f64, Gradients), ClassifierError> {
    batch_gradients(params, batch.iter(), kind)
}

fn batch_gradients<'a>(
    params: &MlpParams,
    batch: impl ExactSizeIterator<Item = &'a Sample>,
    kind: LossKind,
) -> Result<(f64, Gradients), ClassifierError> {
    if batch.len() == 0 {
        return Err(ClassifierError::EmptyDataset);
    }
    let mut grads = params.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        total += sample_loss(params, s, kind, Some((&mut grads, scale)))?;
    }
    Ok((total * scale, grads))
}

/// Mean loss over a dataset without gradients.
pub fn mean_loss(params: &MlpParams, data: &[Sample], kind: LossKind) -> Result<f64, ClassifierError> {
    if data.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let mut total = 0.0;
    for s in data {
        total += sample_loss(params, s, kind, None)?;
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            loss: LossKind::Bce,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ClassifierError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.learning_rate)
            || self.batch_size == 0
            || self.max_epochs == 0
            || !positive(self.epsilon)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return Err(ClassifierError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub epoch: usize,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut MlpParams, grads: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .values_mut()
            .zip(grads.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        }
    }
}

/// Mini-batch Adam with per-epoch validation; returns the parameters of the
/// epoch with the lowest validation loss.
pub fn train(
    config: &TrainConfig,
    initial: MlpParams,
    train_set: &[Sample],
    val_set: &[Sample],
) -> Result<TrainReport, ClassifierError> {
    config.validate()?;
    initial.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let mut params = initial;
    let mut adam = Adam::new(params.n_params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng_for(config.seed, &[stream::TRAIN, epoch as u64]));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = chunk.iter().map(|&i| &train_set[i]);
            let (loss, grads) = batch_gradients(&params, batch, config.loss)?;
            if !loss.is_finite() {
                return Err(ClassifierError::Diverged { epoch, loss });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut params, &grads, config);
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_loss = mean_loss(&params, val_set, config.loss)?;
        if !val_loss.is_finite() || !params.is_finite() {
            return Err(ClassifierError::Diverged {
                epoch,
                loss: val_loss,
            });
        }
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        history.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().is_none_or(|b| val_loss < b.val_loss) {
            best = Some(Checkpoint {
                params: params.clone(),
                epoch,
                val_loss,
            });
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok(TrainReport {
        checkpoint: best.expect("at least one epoch runs"),
        history,
    })
}
