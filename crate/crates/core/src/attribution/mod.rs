//! Open-set attribution: k-means, semi-supervised k-means with pinned
//! labeled samples, and confidence-filtered pseudo-labeling.
//!
//! Distances are squared Euclidean on the raw vectors. Callers that want
//! cosine geometry normalize first with [`SampleSet::l2_normalized`].

mod kmeans;
mod pseudo;

use std::collections::BTreeSet;

pub use kmeans::{
    kmeans, kmeans_observed, ss_kmeans, ss_kmeans_observed, Clustering, KMeansParams, Observer,
};
pub use pseudo::{
    assign_pseudo_labels, cluster_confidences, novel_label, pseudo_label_rounds,
    PseudoLabelOutcome, PseudoLabelReport, PseudoLabelThresholds,
};

use crate::dataio::SampleSet;
use crate::error::{Error, Result};

/// Distinct labels of a fully labeled set.
pub(crate) fn group_labels(set: &SampleSet) -> Result<BTreeSet<&str>> {
    set.iter()
        .map(|r| {
            r.label
                .as_deref()
                .ok_or_else(|| Error::MissingLabel(r.id.clone()))
        })
        .collect()
}
