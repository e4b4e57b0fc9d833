use serde::{Deserialize, Serialize};

use super::OpenSetError;

/// Shape reported for a tail with no spread.
pub const KAPPA_CAP: f64 = 1e6;
const NEWTON_TOL: f64 = 1e-9;
const NEWTON_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub kappa: f64,
    pub sigma: f64,
    pub iterations: usize,
    /// Set when the tail had no spread and the closed-form limit was used.
    pub degenerate: bool,
}

/// `1 - exp(-(d / sigma)^kappa)`, zero for `d <= 0`.
pub fn weibull_cdf(d: f64, kappa: f64, sigma: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    -(-(d / sigma).powf(kappa)).exp_m1()
}

/// Weibull log-likelihood of `xs` under `(kappa, sigma)`.
pub fn weibull_log_likelihood(xs: &[f64], kappa: f64, sigma: f64) -> f64 {
    xs.iter()
        .map(|&x| {
            let z = x / sigma;
            kappa.ln() - sigma.ln() + (kappa - 1.0) * z.ln() - z.powf(kappa)
        })
        .sum()
}

/// Profile-likelihood score for the shape on data scaled to `(0, 1]`:
/// `1/k + mean(ln y) - sum(y^k ln y) / sum(y^k)`, and its derivative.
fn profile_score(ln_y: &[f64], mean_ln: f64, k: f64) -> (f64, f64) {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &l in ln_y {
        let w = (k * l).exp();
        s0 += w;
        s1 += w * l;
        s2 += w * l * l;
    }
    let r = s1 / s0;
    let g = 1.0 / k + mean_ln - r;
    let dg = -1.0 / (k * k) - (s2 / s0 - r * r);
    (g, dg)
}

/// Maximum-likelihood two-parameter Weibull fit on the `tau` largest
/// `distances`.
///
/// The shape solves the profile score equation by Newton iteration kept
/// inside a sign-change bracket (bisecting when a step leaves it); the scale
/// then follows in closed form.
pub fn fit_weibull_tail(distances: &[f64], tau: usize) -> Result<WeibullFit, OpenSetError> {
    if tau == 0 || distances.len() < tau {
        return Err(OpenSetError::TailTooShort {
            have: distances.len(),
            need: tau.max(1),
        });
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let tail = &sorted[..tau];
    if let Some(&bad) = tail.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(OpenSetError::NonPositiveTail(bad));
    }
    let max = tail[0];
    let min = tail[tau - 1];
    if max - min <= f64::EPSILON * max {
        log::warn!("degenerate Weibull tail: {tau} values equal to {max}");
        return Ok(WeibullFit {
            kappa: KAPPA_CAP,
            sigma: max,
            iterations: 0,
            degenerate: true,
        });
    }

    let ln_y: Vec<f64> = tail.iter().map(|x| (x / max).ln()).collect();
    let mean_ln = ln_y.iter().sum::<f64>() / tau as f64;

    // score is decreasing in k: find a bracket [lo, hi] with g(lo) > 0 > g(hi)
    let mut lo = 0.0;
    let mut hi = 1.0;
    while profile_score(&ln_y, mean_ln, hi).0 > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > KAPPA_CAP {
            log::warn!("Weibull shape exceeds cap for tail of {tau} values");
            return Ok(WeibullFit {
                kappa: KAPPA_CAP,
                sigma: max,
                iterations: 0,
                degenerate: true,
            });
        }
    }

    let mut k = if lo > 0.0 { 0.5 * (lo + hi) } else { 0.5 * hi };
    let mut iterations = 0;
    while iterations < NEWTON_MAX_ITER {
        iterations += 1;
        let (g, dg) = profile_score(&ln_y, mean_ln, k);
        if g > 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let mut next = k - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - k).abs();
        k = next;
        if step <= NEWTON_TOL * k.max(1.0) {
            break;
        }
    }
    let mean_pow = ln_y.iter().map(|l| (k * l).exp()).sum::<f64>() / tau as f64;
    Ok(WeibullFit {
        kappa: k,
        sigma: max * mean_pow.powf(1.0 / k),
        iterations,
        degenerate: false,
    })
}
