//! Cosine-similarity retrieval from probe embeddings to a labeled gallery,
//! the top-5 precision metric, and per-class similarity matrices.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{SampleRecord, SampleSet};
use crate::error::{Error, Result};
use crate::linalg;

/// Number of gallery hits per probe in a competition submission.
pub const SUBMISSION_HITS: usize = 5;

/// Ranked gallery hits for one probe. Serializes as
/// `{"probe":"p1","hits":[["g7",0.993],…]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    #[serde(rename = "probe")]
    pub probe_id: String,
    pub hits: Vec<(String, f64)>,
}

/// `aᵀb / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
            id: None,
        });
    }
    let (na, nb) = (linalg::norm(a), linalg::norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm(None));
    }
    Ok(cosine_with_norms(a, na, b, nb))
}

// Shared by the direct and the cached-norm paths so both produce identical bits.
fn cosine_with_norms(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    (linalg::dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Descending similarity, then ascending id.
fn rank_order(a: &(usize, f64), b: &(usize, f64), ids: &[&str]) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(ids[b.0]))
}

/// A gallery with cached norms, for repeated queries.
pub struct GalleryIndex<'a> {
    gallery: &'a SampleSet,
    norms: Vec<f64>,
    ids: Vec<&'a str>,
}

impl<'a> GalleryIndex<'a> {
    pub fn new(gallery: &'a SampleSet) -> Result<Self> {
        if gallery.is_empty() {
            return Err(Error::EmptySet);
        }
        let norms = gallery
            .iter()
            .map(|r| {
                let n = linalg::norm(&r.vec);
                if n == 0.0 {
                    Err(Error::ZeroNorm(Some(r.id.clone())))
                } else {
                    Ok(n)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let ids = gallery.iter().map(|r| r.id.as_str()).collect();
        Ok(GalleryIndex {
            gallery,
            norms,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn top_k(&self, probe: &SampleRecord, k: usize) -> Result<RetrievalResult> {
        if k == 0 {
            return Err(Error::invalid("k must be positive"));
        }
        if k > self.len() {
            return Err(Error::invalid(format!(
                "k = {k} exceeds gallery size {}",
                self.len()
            )));
        }
        if probe.vec.len() != self.gallery.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.gallery.dim(),
                actual: probe.vec.len(),
                id: Some(probe.id.clone()),
            });
        }
        let pn = linalg::norm(&probe.vec);
        if pn == 0.0 {
            return Err(Error::ZeroNorm(Some(probe.id.clone())));
        }

        let mut scored: Vec<(usize, f64)> = self
            .gallery
            .iter()
            .zip(&self.norms)
            .enumerate()
            .map(|(i, (g, &gn))| (i, cosine_with_norms(&probe.vec, pn, &g.vec, gn)))
            .collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| rank_order(a, b, &self.ids);
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);

        Ok(RetrievalResult {
            probe_id: probe.id.clone(),
            hits: scored
                .into_iter()
                .map(|(i, s)| (self.ids[i].to_owned(), s))
                .collect(),
        })
    }

    /// Retrieves every probe in parallel; output order follows `probes`.
    pub fn top_k_all(&self, probes: &SampleSet, k: usize) -> Result<Vec<RetrievalResult>> {
        probes
            .records()
            .par_iter()
            .map(|p| self.top_k(p, k))
            .collect()
    }
}

/// The `k` most similar gallery records, descending; ties go to the smaller id.
pub fn top_k(probe: &SampleRecord, gallery: &SampleSet, k: usize) -> Result<RetrievalResult> {
    GalleryIndex::new(gallery)?.top_k(probe, k)
}

/// Fraction of retrieved labels matching the probe label, over
/// `SUBMISSION_HITS` hits per probe.
pub fn precision_at_5(
    results: &[RetrievalResult],
    probe_labels: &HashMap<String, String>,
    gallery_labels: &HashMap<String, String>,
) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut correct = 0usize;
    for r in results {
        if r.hits.len() != SUBMISSION_HITS {
            return Err(Error::invalid(format!(
                "probe `{}` has {} hits, expected {SUBMISSION_HITS}",
                r.probe_id,
                r.hits.len()
            )));
        }
        let truth = probe_labels
            .get(&r.probe_id)
            .ok_or_else(|| Error::MissingLabel(r.probe_id.clone()))?;
        for (gid, _) in &r.hits {
            let got = gallery_labels
                .get(gid)
                .ok_or_else(|| Error::MissingLabel(gid.clone()))?;
            if got == truth {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / (SUBMISSION_HITS * results.len()) as f64)
}

/// id → label for every labeled record.
pub fn label_map(set: &SampleSet) -> HashMap<String, String> {
    set.iter()
        .filter_map(|r| r.label.as_ref().map(|l| (r.id.clone(), l.clone())))
        .collect()
}

/// Cosine similarities between per-class mean embeddings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSimilarity {
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

pub fn class_similarity_matrix(sets: &BTreeMap<String, SampleSet>) -> Result<ClassSimilarity> {
    if sets.len() < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    let mut means = Vec::with_capacity(sets.len());
    let mut dim = None;
    for (label, set) in sets {
        if set.is_empty() {
            return Err(Error::invalid(format!("class `{label}` is empty")));
        }
        if let Some(d) = dim {
            if d != set.dim() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: set.dim(),
                    id: Some(label.clone()),
                });
            }
        }
        dim = Some(set.dim());
        let mean = linalg::mean(set.vectors(), set.dim()).ok_or(Error::EmptySet)?;
        if linalg::norm(&mean) == 0.0 {
            return Err(Error::ZeroNorm(Some(label.clone())));
        }
        means.push(mean);
    }

    let n = means.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for a in 0..n {
        matrix[a][a] = 1.0;
        for b in a + 1..n {
            let s = cosine_similarity(&means[a], &means[b])?;
            matrix[a][b] = s;
            matrix[b][a] = s;
        }
    }
    Ok(ClassSimilarity {
        labels: sets.keys().cloned().collect(),
        matrix,
    })
}

/// Splits a labeled set into per-label sets; unlabeled records are skipped.
pub fn group_by_label(set: &SampleSet) -> Result<BTreeMap<String, SampleSet>> {
    let mut groups: BTreeMap<String, Vec<SampleRecord>> = BTreeMap::new();
    for r in set {
        if let Some(l) = &r.label {
            groups.entry(l.clone()).or_default().push(r.clone());
        }
    }
    groups
        .into_iter()
        .map(|(l, recs)| Ok((l, SampleSet::with_dim(set.dim(), recs)?)))
        .collect()
}

pub fn write_results_jsonl<W: Write>(
    results: &[RetrievalResult],
    w: &mut W,
) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_results_jsonl<R: BufRead>(reader: R) -> Result<Vec<RetrievalResult>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<results>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse("<results>", idx + 1, e))?);
    }
    Ok(out)
}
