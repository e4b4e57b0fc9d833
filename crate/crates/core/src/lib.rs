//! Multi-label open-set classification benchmark built on synthetic
//! separated-source features.
//!
//! The crate covers dataset planning (class splits, soundscapes, clips),
//! feature synthesis, dense classifier heads, open-set decision rules, a
//! hyperparameter tuner, evaluation metrics and the pipeline that ties them
//! together.

pub mod binfmt;
pub mod classifier;
pub mod dataset_plan;
pub mod eval;
pub mod experiment;
pub mod openset;
pub mod seed;
pub mod synth_features;
pub mod tuner;
