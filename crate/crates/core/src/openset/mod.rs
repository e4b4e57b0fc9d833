//! Open-set decision rules: maximum-probability thresholding and OpenMax
//! recalibration with per-class Weibull tail models.

mod msp;
mod openmax;
mod weibull;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use msp::{decide_msp, decide_msp_per_source};
pub use openmax::{
    decide_openmax, decide_openmax_per_source, euclidean, mean_activation, openmax_recalibrate,
    qualifies_multiclass, qualifying_classes_multilabel, ActivationRecord, ClassTail,
    OpenMaxConfig, OutputSquash, TailCalibration, WeibullTailModel,
};
pub use weibull::{fit_weibull_tail, weibull_cdf, weibull_log_likelihood, WeibullFit, KAPPA_CAP};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OpenSetError {
    #[error("empty input")]
    Empty,
    #[error("tail needs {need} distances, have {have}")]
    TailTooShort { have: usize, need: usize },
    #[error("tail contains non-positive or non-finite distance {0}")]
    NonPositiveTail(f64),
    #[error("classes with too few qualifying examples (class, count): {classes:?}; need {need}")]
    TooFewQualifying {
        classes: Vec<(usize, usize)>,
        need: usize,
    },
    #[error("no tail model for class {0}")]
    MissingModel(usize),
    #[error("class {class}: {source}")]
    Class {
        class: usize,
        source: Box<OpenSetError>,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Known/unknown verdict for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSetDecision {
    /// `true` when an unknown class is predicted present.
    pub unknown: bool,
    /// Recalibrated known-class outputs (OpenMax only).
    pub y_hat_w: Option<Vec<f64>>,
    /// Unknown-class probability (OpenMax only).
    pub p_u: Option<f64>,
}

impl OpenSetDecision {
    /// The binary prediction as 0 (known) or 1 (unknown).
    pub fn y_o(&self) -> u8 {
        u8::from(self.unknown)
    }
}
