use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Tolerance on `Σ weights = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

pub(crate) fn check_weights(weights: &[f64], what: &str) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid(format!(
            "{what} must be finite and non-negative"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::invalid(format!("{what} sum to {sum}, expected 1")));
    }
    Ok(())
}

/// `(x − min)/(max − min)`, or all zeros when the scores are constant.
pub fn min_max(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return vec![0.0; scores.len()];
    }
    // The clamp absorbs rounding so the result stays inside [0, 1].
    scores
        .iter()
        .map(|x| ((x - lo) / span).clamp(0.0, 1.0))
        .collect()
}

/// Min-max normalizes each module over the probe set, then takes the
/// weighted sum. All maps must share one id set.
pub fn fuse_scores(
    modules: &[&BTreeMap<String, f64>],
    weights: &[f64],
) -> Result<BTreeMap<String, f64>> {
    if modules.is_empty() {
        return Err(Error::EmptySet);
    }
    if modules.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} modules but {} fusion weights",
            modules.len(),
            weights.len()
        )));
    }
    check_weights(weights, "fusion weights")?;
    let ids: Vec<&String> = modules[0].keys().collect();
    for (i, m) in modules.iter().enumerate().skip(1) {
        if !m.keys().eq(ids.iter().copied()) {
            return Err(Error::invalid(format!(
                "module {} scores a different id set than module 0",
                i
            )));
        }
    }
    let mut fused = vec![0.0; ids.len()];
    for (m, &w) in modules.iter().zip(weights) {
        let raw: Vec<f64> = m.values().copied().collect();
        if let Some(bad) = raw.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(ids[bad].clone()));
        }
        for (f, n) in fused.iter_mut().zip(min_max(&raw)) {
            *f += w * n;
        }
    }
    Ok(ids
        .into_iter()
        .cloned()
        .zip(fused.into_iter().map(|f| f.clamp(0.0, 1.0)))
        .collect())
}
