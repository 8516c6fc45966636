use crate::attribution::{kmeans, KMeansParams};
use crate::dataio::SampleSet;
use crate::error::{Error, Result};
use crate::linalg;

/// Clamp floor for the similarity before taking its logarithm.
pub const SIM_EPS: f64 = 1e-12;
/// Smallest gallery the entropy score accepts.
pub const MIN_GALLERY: usize = 5;

/// `−s·ln s` with `s` clamped to `[ε, 1]`; always in `[0, 1/e]`.
pub fn entropy_from_similarity(sim: f64) -> f64 {
    let s = sim.clamp(SIM_EPS, 1.0);
    // s·ln s ≤ 0 on (0, 1]; `abs` also turns −0 into +0 at s = 1.
    (s * s.ln()).abs()
}

/// Unit-norm gallery centroids used to measure how far a probe sits from
/// every known group.
#[derive(Debug, Clone)]
pub struct EntropyModel {
    centroids: Vec<Vec<f64>>,
}

impl EntropyModel {
    /// Clusters the gallery into `max(1, ⌊n/5⌋)` groups.
    pub fn fit(gallery: &SampleSet, seed: u64) -> Result<Self> {
        if gallery.len() < MIN_GALLERY {
            return Err(Error::invalid(format!(
                "entropy score needs at least {MIN_GALLERY} gallery samples, got {}",
                gallery.len()
            )));
        }
        let k = (gallery.len() / 5).max(1);
        let clustering = kmeans(gallery, &KMeansParams::new(k, seed))?;
        // A zero centroid has no direction and cannot be the most similar one.
        let centroids = clustering
            .centroids
            .iter()
            .filter_map(|c| linalg::normalized(c))
            .collect();
        Ok(EntropyModel { centroids })
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    /// Largest cosine similarity between `probe` and any centroid.
    pub fn similarity(&self, probe: &[f64]) -> Result<f64> {
        let unit = linalg::normalized(probe).ok_or(Error::ZeroNorm(None))?;
        Ok(self
            .centroids
            .iter()
            .map(|c| linalg::dot(&unit, c).clamp(-1.0, 1.0))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn score(&self, probe: &[f64]) -> Result<f64> {
        Ok(entropy_from_similarity(self.similarity(probe)?))
    }
}

pub fn entropy_score(probe: &[f64], gallery: &SampleSet, seed: u64) -> Result<f64> {
    super::knn::check_dim(probe, gallery)?;
    EntropyModel::fit(gallery, seed)?.score(probe)
}
