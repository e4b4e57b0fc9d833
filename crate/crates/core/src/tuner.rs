//! Budgeted random search over the open-set hyperparameters `(delta, tau,
//! alpha)`.
//!
//! Samples come from a fixed stream: trials are generated in blocks of
//! [`STRATA`], and within a block each dimension is Latin-hypercube
//! stratified. A larger budget therefore only appends trials, so the best
//! objective can never get worse as the budget grows.

use std::fmt::Display;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_seed, rng_for, stream};

/// Trials per stratified block.
pub const STRATA: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum TuneError {
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub delta: (f64, f64),
    pub tau: (usize, usize),
    pub alpha: (usize, usize),
}

impl SearchSpace {
    /// Full OpenMax space for a head with `n_classes` outputs.
    pub fn openmax(n_classes: usize) -> Self {
        Self {
            delta: (0.0, 1.0),
            tau: (5, 200),
            alpha: (1, n_classes.max(1)),
        }
    }

    /// Threshold-only space: `tau` and `alpha` pinned.
    pub fn msp_only() -> Self {
        Self {
            delta: (0.0, 1.0),
            tau: (5, 5),
            alpha: (1, 1),
        }
    }

    fn validate(&self) -> Result<(), TuneError> {
        let (dl, dh) = self.delta;
        if !(0.0 <= dl && dl <= dh && dh <= 1.0) {
            return Err(TuneError::InvalidSpace(format!("delta range {:?}", self.delta)));
        }
        if self.tau.0 > self.tau.1 || self.tau.0 == 0 {
            return Err(TuneError::InvalidSpace(format!("tau range {:?}", self.tau)));
        }
        if self.alpha.0 > self.alpha.1 || self.alpha.0 == 0 {
            return Err(TuneError::InvalidSpace(format!("alpha range {:?}", self.alpha)));
        }
        Ok(())
    }

    pub fn contains(&self, p: &TrialParams) -> bool {
        (self.delta.0..=self.delta.1).contains(&p.delta)
            && (self.tau.0..=self.tau.1).contains(&p.tau)
            && (self.alpha.0..=self.alpha.1).contains(&p.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    pub delta: f64,
    pub tau: usize,
    pub alpha: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub params: TrialParams,
    /// Unknown-detection accuracy; `None` when the trial failed.
    pub objective: Option<f64>,
    pub error: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: TrialRecord,
    pub trials: Vec<TrialRecord>,
}

fn int_from_unit(u: f64, (lo, hi): (usize, usize)) -> usize {
    let span = (hi - lo + 1) as f64;
    (lo + (u * span).floor() as usize).min(hi)
}

/// The first `budget` parameter draws of the stream keyed by `seed`.
pub fn sample_params(space: &SearchSpace, budget: usize, seed: u64) -> Vec<TrialParams> {
    let mut out = Vec::with_capacity(budget);
    let mut block = 0u64;
    while out.len() < budget {
        let mut rng = rng_for(seed, &[stream::TUNE, block]);
        let mut strata: [Vec<usize>; 3] = std::array::from_fn(|_| (0..STRATA).collect());
        for s in &mut strata {
            s.shuffle(&mut rng);
        }
        for i in 0..STRATA {
            let mut unit = |d: usize| (strata[d][i] as f64 + rng.random::<f64>()) / STRATA as f64;
            let (u_delta, u_tau, u_alpha) = (unit(0), unit(1), unit(2));
            out.push(TrialParams {
                delta: space.delta.0 + u_delta * (space.delta.1 - space.delta.0),
                tau: int_from_unit(u_tau, space.tau),
                alpha: int_from_unit(u_alpha, space.alpha),
            });
        }
        block += 1;
    }
    out.truncate(budget);
    out
}

/// Evaluates `budget` trials and returns the best (earliest on ties).
///
/// Failed trials, including objectives outside `[0, 1]`, are kept in the log
/// with their error and excluded from selection.
pub fn tune<F, E>(
    objective: F,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<TuneResult, TuneError>
where
    F: Fn(&TrialParams) -> Result<f64, E>,
    E: Display,
{
    if budget == 0 {
        return Err(TuneError::ZeroBudget);
    }
    space.validate()?;
    let trials: Vec<TrialRecord> = sample_params(space, budget, seed)
        .into_iter()
        .enumerate()
        .map(|(trial, params)| {
            let (objective, error) = match objective(&params) {
                Ok(v) if (0.0..=1.0).contains(&v) => (Some(v), None),
                Ok(v) => (None, Some(format!("objective {v} outside [0, 1]"))),
                Err(e) => (None, Some(e.to_string())),
            };
            if let Some(e) = &error {
                log::warn!("trial {trial} {params:?} skipped: {e}");
            }
            TrialRecord {
                trial,
                params,
                objective,
                error,
                seed: derive_seed(seed, &[stream::TUNE, u64::MAX, trial as u64]),
            }
        })
        .collect();
    let best = trials
        .iter()
        .filter(|t| t.objective.is_some())
        .fold(None::<&TrialRecord>, |best, t| match best {
            Some(b) if b.objective >= t.objective => Some(b),
            _ => Some(t),
        })
        .cloned()
        .ok_or(TuneError::AllTrialsFailed(budget))?;
    Ok(TuneResult { best, trials })
}

/// CSV trial log: `trial,delta,tau,alpha,objective,seed`; failed trials have
/// an empty objective.
pub fn write_trial_log(mut w: impl Write, trials: &[TrialRecord]) -> std::io::Result<()> {
    writeln!(w, "trial,delta,tau,alpha,objective,seed")?;
    for t in trials {
        let objective = t.objective.map(|o| format!("{o:.6}")).unwrap_or_default();
        writeln!(
            w,
            "{},{:.6},{},{},{},{}",
            t.trial, t.params.delta, t.params.tau, t.params.alpha, objective, t.seed
        )?;
    }
    Ok(())
}
