//! Dense classification head and its three training regimes: multi-label
//! (binary cross-entropy), multi-class (cross-entropy, including the
//! combinatorial label-set encoding) and permutation-invariant multi-class.

mod combo;
mod loss;
mod mlp;
mod predict;
mod train;

use thiserror::Error;

pub use combo::ComboVocabulary;
pub use loss::{
    bce_loss, ce_loss, log_sum_exp, pit_loss, sigmoid, softmax, LossKind, PitMatch,
    MAX_PIT_SOURCES,
};
pub use mlp::{Dense, Gradients, MlpParams};
pub use predict::{argmax, predict_threshold, predict_topm};
pub use train::{
    compute_gradients, mean_loss, sample_loss, train, Checkpoint, EpochLog, Sample, TrainConfig,
    TrainReport,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClassifierError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        expected: usize,
        got: usize,
        context: String,
    },
    #[error("class index {class} out of range for {n} outputs")]
    ClassOutOfRange { class: usize, n: usize },
    #[error("permutation-invariant loss supports 1 to 4 sources, got {0}")]
    TooManySources(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("label combination {0:?} is not in the combination vocabulary")]
    OutOfVocabulary(Vec<usize>),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
