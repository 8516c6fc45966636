use crate::dataio::SampleSet;
use crate::error::{Error, Result};
use crate::linalg;

/// Mean of the `k` smallest Euclidean distances from `probe` to the gallery.
pub fn knn_score(probe: &[f64], gallery: &SampleSet, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    if k > gallery.len() {
        return Err(Error::invalid(format!(
            "K = {k} exceeds gallery size {}",
            gallery.len()
        )));
    }
    check_dim(probe, gallery)?;
    let mut d: Vec<f64> = gallery
        .vectors()
        .map(|g| linalg::euclidean(probe, g))
        .collect();
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, f64::total_cmp);
        d.truncate(k);
    }
    // Summing in ascending order keeps the result identical to a full sort.
    d.sort_by(f64::total_cmp);
    Ok(d.iter().sum::<f64>() / k as f64)
}

pub(crate) fn check_dim(probe: &[f64], gallery: &SampleSet) -> Result<()> {
    if probe.len() != gallery.dim() {
        return Err(Error::DimensionMismatch {
            expected: gallery.dim(),
            actual: probe.len(),
            id: None,
        });
    }
    Ok(())
}
