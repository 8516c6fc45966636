//! Confidence-filtered pseudo-label assignment and the repeated
//! cluster → filter → relabel loop.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::kmeans::{ss_kmeans, Clustering, KMeansParams};
use crate::dataio::{SampleRecord, SampleSet};
use crate::error::{Error, Result};
use crate::retrieval::cosine_similarity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoLabelThresholds {
    /// Fraction of highest-scoring samples kept by the first filter.
    pub top_frac: f64,
    /// Labels with fewer survivors than this are dropped.
    pub min_class_count: usize,
    /// Samples scoring below this are dropped.
    pub min_score: f64,
}

impl Default for PseudoLabelThresholds {
    fn default() -> Self {
        PseudoLabelThresholds {
            top_frac: 0.9,
            min_class_count: 10,
            min_score: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PseudoLabelReport {
    pub accepted: BTreeMap<String, String>,
    /// Sorted ascending.
    pub rejected: Vec<String>,
    pub thresholds: PseudoLabelThresholds,
}

impl PseudoLabelReport {
    /// Writes `id,label,accepted` rows sorted by id; rejected rows carry an
    /// empty label.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut rows: Vec<(&str, &str, u8)> = self
            .accepted
            .iter()
            .map(|(id, l)| (id.as_str(), l.as_str(), 1))
            .chain(self.rejected.iter().map(|id| (id.as_str(), "", 0)))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["id", "label", "accepted"])?;
        for (id, label, acc) in rows {
            wtr.write_record([id, label, &acc.to_string()])?;
        }
        wtr.flush()
    }
}

/// Applies the three filters once each, in order: keep the ⌈top_frac·n⌉
/// best-scoring samples (ties by ascending id), drop labels with fewer than
/// `min_class_count` survivors, drop scores below `min_score`.
pub fn assign_pseudo_labels(
    scores: &BTreeMap<String, (String, f64)>,
    thresholds: &PseudoLabelThresholds,
) -> Result<PseudoLabelReport> {
    if scores.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(thresholds.top_frac > 0.0 && thresholds.top_frac <= 1.0) {
        return Err(Error::invalid(format!(
            "top_frac must lie in (0, 1], got {}",
            thresholds.top_frac
        )));
    }
    for (id, (_, s)) in scores {
        if !s.is_finite() || !(0.0..=1.0).contains(s) {
            return Err(Error::invalid(format!(
                "score of `{id}` outside [0, 1]: {s}"
            )));
        }
    }

    let mut ranked: Vec<(&String, &String, f64)> =
        scores.iter().map(|(id, (l, s))| (id, l, *s)).collect();
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(b.0)));

    let keep = ((thresholds.top_frac * ranked.len() as f64).ceil() as usize).min(ranked.len());
    let survivors = &ranked[..keep];

    let mut class_counts: HashMap<&String, usize> = HashMap::new();
    for (_, l, _) in survivors {
        *class_counts.entry(*l).or_default() += 1;
    }

    let accepted: BTreeMap<String, String> = survivors
        .iter()
        .filter(|(_, l, _)| class_counts[*l] >= thresholds.min_class_count)
        .filter(|(_, _, s)| *s >= thresholds.min_score)
        .map(|(id, l, _)| ((*id).clone(), (*l).clone()))
        .collect();
    let rejected = scores
        .keys()
        .filter(|id| !accepted.contains_key(*id))
        .cloned()
        .collect();
    Ok(PseudoLabelReport {
        accepted,
        rejected,
        thresholds: *thresholds,
    })
}

/// Name given to the j-th novel cluster.
pub fn novel_label(j: usize) -> String {
    format!("novel-{j}")
}

/// Best label and confidence for each unlabeled sample: the label of its
/// cluster and its cosine similarity to that centroid, clipped to `[0, 1]`.
pub fn cluster_confidences(
    clustering: &Clustering,
    unlabeled: &SampleSet,
) -> Result<BTreeMap<String, (String, f64)>> {
    let classes = clustering
        .cluster_labels
        .iter()
        .filter(|l| l.is_some())
        .count();
    let index: HashMap<&str, usize> = clustering
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    unlabeled
        .iter()
        .map(|r| {
            let pos = *index.get(r.id.as_str()).ok_or_else(|| {
                Error::invalid(format!("`{}` is not part of the clustering", r.id))
            })?;
            let c = clustering.assignment[pos];
            let label = clustering.cluster_labels[c]
                .clone()
                .unwrap_or_else(|| novel_label(c - classes));
            let sim = match cosine_similarity(&r.vec, &clustering.centroids[c]) {
                Ok(s) => s.max(0.0),
                Err(Error::ZeroNorm(_)) => 0.0,
                Err(e) => return Err(e),
            };
            Ok((r.id.clone(), (label, sim)))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PseudoLabelOutcome {
    /// Accepted pseudo-labels across all rounds plus the samples never accepted.
    pub report: PseudoLabelReport,
    /// Clustering from the last round.
    pub clustering: Clustering,
    pub rounds_run: usize,
}

/// Repeats semi-supervised clustering and filtering for `rounds` rounds.
/// Samples accepted in one round join the labeled pool for the next (novel
/// clusters become classes named `novel-j`), and the number of novel
/// clusters shrinks so the total cluster count stays fixed.
pub fn pseudo_label_rounds(
    labeled: &SampleSet,
    unlabeled: &SampleSet,
    k_extra: usize,
    rounds: usize,
    params: &KMeansParams,
    thresholds: &PseudoLabelThresholds,
) -> Result<PseudoLabelOutcome> {
    if rounds == 0 {
        return Err(Error::invalid("rounds must be at least 1"));
    }
    if unlabeled.is_empty() {
        return Err(Error::EmptySet);
    }
    let base_classes = super::group_labels(labeled)?.len();
    let total_k = base_classes + k_extra;

    let mut pool: Vec<SampleRecord> = labeled.records().to_vec();
    let mut remaining: Vec<SampleRecord> = unlabeled.records().to_vec();
    let mut accepted_all: BTreeMap<String, String> = BTreeMap::new();
    let mut last = None;
    let mut rounds_run = 0;

    for round in 0..rounds {
        if remaining.is_empty() {
            break;
        }
        let lab = SampleSet::with_dim(labeled.dim(), pool.clone())?;
        let unl = SampleSet::with_dim(labeled.dim(), remaining.clone())?;
        let classes = super::group_labels(&lab)?.len();
        let extra = total_k.saturating_sub(classes).min(unl.len());
        let round_params = KMeansParams {
            seed: params.seed.wrapping_add(round as u64),
            ..*params
        };
        let clustering = ss_kmeans(&lab, &unl, extra, &round_params)?;
        let scores = cluster_confidences(&clustering, &unl)?;
        let report = assign_pseudo_labels(&scores, thresholds)?;
        rounds_run += 1;

        // Rename novel clusters so their names stay unique across rounds.
        let renamed: BTreeMap<String, String> = report
            .accepted
            .iter()
            .map(|(id, l)| {
                let name = match l.strip_prefix("novel-") {
                    Some(j) if !clustering.cluster_labels.iter().flatten().any(|c| c == l) => {
                        format!("novel-r{round}-{j}")
                    }
                    _ => l.clone(),
                };
                (id.clone(), name)
            })
            .collect();

        let mut still = Vec::with_capacity(remaining.len());
        for mut r in remaining.drain(..) {
            match renamed.get(&r.id) {
                Some(l) => {
                    r.label = Some(l.clone());
                    accepted_all.insert(r.id.clone(), l.clone());
                    pool.push(r);
                }
                None => still.push(r),
            }
        }
        remaining = still;
        last = Some(clustering);
    }

    let mut rejected: Vec<String> = remaining.into_iter().map(|r| r.id).collect();
    rejected.sort();
    Ok(PseudoLabelOutcome {
        report: PseudoLabelReport {
            accepted: accepted_all,
            rejected,
            thresholds: *thresholds,
        },
        clustering: last.expect("at least one round runs"),
        rounds_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(items: &[(&str, &str, f64)]) -> BTreeMap<String, (String, f64)> {
        items
            .iter()
            .map(|(id, l, s)| (id.to_string(), (l.to_string(), *s)))
            .collect()
    }

    #[test]
    fn all_confident_single_class() {
        let items: Vec<(String, f64)> = (0..20).map(|i| (format!("s{i:02}"), 1.0)).collect();
        let s: BTreeMap<_, _> = items
            .iter()
            .map(|(id, v)| (id.clone(), ("A".to_string(), *v)))
            .collect();
        // ceil(0.9 * 20) = 18 survive the top-fraction cut; ties drop the largest ids
        let r = assign_pseudo_labels(&s, &PseudoLabelThresholds::default()).unwrap();
        assert_eq!(r.accepted.len(), 18);
        assert_eq!(r.rejected, vec!["s18".to_string(), "s19".to_string()]);

        let keep_all = PseudoLabelThresholds {
            top_frac: 1.0,
            ..Default::default()
        };
        let r = assign_pseudo_labels(&s, &keep_all).unwrap();
        assert_eq!(r.accepted.len(), 20);
        assert!(r.rejected.is_empty());
    }

    #[test]
    fn single_low_score_rejected() {
        let t = PseudoLabelThresholds {
            min_class_count: 1,
            ..Default::default()
        };
        let r = assign_pseudo_labels(&scores(&[("x", "A", 0.69)]), &t).unwrap();
        assert!(r.accepted.is_empty());
        assert_eq!(r.rejected, vec!["x".to_string()]);
        let r = assign_pseudo_labels(&scores(&[("x", "A", 0.7)]), &t).unwrap();
        assert_eq!(r.accepted.len(), 1);
    }

    #[test]
    fn class_count_boundary_is_strict_less_than() {
        let t = PseudoLabelThresholds {
            top_frac: 1.0,
            ..Default::default()
        };
        let nine: Vec<(String, String, f64)> =
            (0..9).map(|i| (format!("a{i}"), "A".into(), 0.9)).collect();
        let s: BTreeMap<_, _> = nine
            .iter()
            .map(|(i, l, v)| (i.clone(), (l.clone(), *v)))
            .collect();
        assert!(assign_pseudo_labels(&s, &t).unwrap().accepted.is_empty());
        let mut s = s;
        s.insert("a9".into(), ("A".into(), 0.9));
        assert_eq!(assign_pseudo_labels(&s, &t).unwrap().accepted.len(), 10);
    }

    #[test]
    fn top_fraction_uses_ceiling_and_id_ties() {
        let t = PseudoLabelThresholds {
            top_frac: 0.5,
            min_class_count: 1,
            min_score: 0.0,
        };
        // ceil(0.5 * 3) = 2 survivors; all scores tie so the two smallest ids win
        let r = assign_pseudo_labels(
            &scores(&[("c", "A", 0.8), ("a", "A", 0.8), ("b", "A", 0.8)]),
            &t,
        )
        .unwrap();
        assert_eq!(r.accepted.keys().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(r.rejected, vec!["c".to_string()]);
    }

    #[test]
    fn invalid_inputs() {
        let t = PseudoLabelThresholds::default();
        assert!(matches!(
            assign_pseudo_labels(&BTreeMap::new(), &t),
            Err(Error::EmptySet)
        ));
        let bad = PseudoLabelThresholds { top_frac: 0.0, ..t };
        assert!(assign_pseudo_labels(&scores(&[("x", "A", 0.9)]), &bad).is_err());
        assert!(assign_pseudo_labels(&scores(&[("x", "A", 1.5)]), &t).is_err());
    }

    #[test]
    fn csv_output() {
        let t = PseudoLabelThresholds {
            min_class_count: 1,
            ..Default::default()
        };
        let r = assign_pseudo_labels(&scores(&[("b", "A", 0.95), ("a", "B", 0.1)]), &t).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "id,label,accepted\na,,0\nb,A,1\n"
        );
    }
}
