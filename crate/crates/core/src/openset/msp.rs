use super::{OpenSetDecision, OpenSetError};

/// Unknown iff the largest class probability is below `delta`.
pub fn decide_msp(y_hat: &[f64], delta: f64) -> Result<OpenSetDecision, OpenSetError> {
    let max = y_hat
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(OpenSetError::Empty)?;
    Ok(OpenSetDecision {
        unknown: max < delta,
        y_hat_w: None,
        p_u: None,
    })
}

/// Unknown iff any source's largest probability is below `delta`.
pub fn decide_msp_per_source(
    y_hats: &[Vec<f64>],
    delta: f64,
) -> Result<OpenSetDecision, OpenSetError> {
    if y_hats.is_empty() {
        return Err(OpenSetError::Empty);
    }
    let mut unknown = false;
    for y in y_hats {
        unknown |= decide_msp(y, delta)?.unknown;
    }
    Ok(OpenSetDecision {
        unknown,
        y_hat_w: None,
        p_u: None,
    })
}
