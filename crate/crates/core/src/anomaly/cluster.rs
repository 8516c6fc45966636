use std::collections::BTreeMap;

use crate::attribution::{kmeans, Clustering, KMeansParams};
use crate::dataio::SampleSet;
use crate::error::{Error, Result};
use crate::linalg;

/// Both clusterings plus the per-probe two-part distance score.
#[derive(Debug, Clone)]
pub struct ClusterScores {
    pub probe_clusters: Clustering,
    pub gallery_clusters: Clustering,
    /// Scores in probe-set order.
    pub scores: Vec<f64>,
}

impl ClusterScores {
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.probe_clusters
            .ids
            .iter()
            .cloned()
            .zip(self.scores.iter().copied())
            .collect()
    }
}

fn nearest_distance(x: &[f64], centers: &[Vec<f64>]) -> f64 {
    centers
        .iter()
        .map(|c| linalg::euclidean(x, c))
        .fold(f64::INFINITY, f64::min)
}

/// `w1·min_c d(x, G_c) + w2·min_c d(P_{a(x)}, G_c)`, with `p` probe clusters
/// and `g` gallery clusters.
#[allow(clippy::too_many_arguments)]
pub fn cluster_scores(
    probe_set: &SampleSet,
    gallery: &SampleSet,
    p: usize,
    g: usize,
    w1: f64,
    w2: f64,
    seed: u64,
) -> Result<ClusterScores> {
    if probe_set.dim() != gallery.dim() {
        return Err(Error::DimensionMismatch {
            expected: gallery.dim(),
            actual: probe_set.dim(),
            id: None,
        });
    }
    if p == 0 || p > probe_set.len() {
        return Err(Error::invalid(format!(
            "p = {p} must be in 1..={}",
            probe_set.len()
        )));
    }
    if g == 0 || g > gallery.len() {
        return Err(Error::invalid(format!(
            "g = {g} must be in 1..={}",
            gallery.len()
        )));
    }
    let probe_clusters = kmeans(probe_set, &KMeansParams::new(p, seed))?;
    let gallery_clusters = kmeans(gallery, &KMeansParams::new(g, seed))?;
    let gc = &gallery_clusters.centroids;
    let center_term: Vec<f64> = probe_clusters
        .centroids
        .iter()
        .map(|c| nearest_distance(c, gc))
        .collect();
    let scores = probe_set
        .vectors()
        .zip(&probe_clusters.assignment)
        .map(|(x, &a)| w1 * nearest_distance(x, gc) + w2 * center_term[a])
        .collect();
    Ok(ClusterScores {
        probe_clusters,
        gallery_clusters,
        scores,
    })
}
