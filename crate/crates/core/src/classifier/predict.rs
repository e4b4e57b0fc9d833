/// Indices of the `m` largest logits (ties to the lower index), sorted
/// ascending. `m` is capped at the number of outputs.
pub fn predict_topm(v: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx.sort_unstable();
    idx
}

/// `{ j : v_j > lambda }`.
pub fn predict_threshold(v: &[f64], lambda: f64) -> Vec<usize> {
    (0..v.len()).filter(|&j| v[j] > lambda).collect()
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    predict_topm(v, 1).first().copied().unwrap_or(0)
}
