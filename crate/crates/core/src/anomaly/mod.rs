//! Novelty scoring of probes against a gallery of known classes.

mod cluster;
mod entropy;
mod fusion;
mod knn;
mod lof;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::SampleSet;
use crate::error::{Error, Result};

pub use cluster::{cluster_scores, ClusterScores};
pub use entropy::{entropy_from_similarity, entropy_score, EntropyModel, SIM_EPS};
pub use fusion::{fuse_scores, min_max, WEIGHT_SUM_TOL};
pub use knn::knn_score;
pub use lof::{lof_score, LofModel, DENSITY_EPS};

/// Fusion weights per module; must be non-negative and sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionWeights {
    pub knn: f64,
    pub cluster: f64,
    pub lof: f64,
    #[serde(default)]
    pub entropy: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        let third = 1.0 / 3.0;
        FusionWeights {
            knn: third,
            cluster: third,
            lof: third,
            entropy: 0.0,
        }
    }
}

impl FusionWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.knn, self.cluster, self.lof, self.entropy]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnomalyConfig {
    /// Neighbors averaged by the KNN module.
    #[serde(rename = "K")]
    pub knn_k: usize,
    pub k_lof: usize,
    /// Probe cluster count; `None` means `max(1, ⌊|probe|/5⌋)`.
    pub p: Option<usize>,
    /// Gallery cluster count; `None` means `max(1, ⌊|gallery|/5⌋)`.
    pub g: Option<usize>,
    pub w1: f64,
    pub w2: f64,
    pub fusion_weights: FusionWeights,
    /// L2-normalize embeddings before the distance-based modules.
    pub normalize: bool,
    pub seed: u64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig {
            knn_k: 5,
            k_lof: 5,
            p: None,
            g: None,
            w1: 0.5,
            w2: 0.5,
            fusion_weights: FusionWeights::default(),
            normalize: true,
            seed: 0,
        }
    }
}

fn default_clusters(n: usize) -> usize {
    (n / 5).max(1)
}

impl AnomalyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knn_k == 0 || self.k_lof == 0 || self.p == Some(0) || self.g == Some(0) {
            return Err(Error::invalid("K, k_lof, p and g must all be at least 1"));
        }
        fusion::check_weights(&[self.w1, self.w2], "w1 and w2")?;
        fusion::check_weights(&self.fusion_weights.as_array(), "fusion weights")
    }

    pub fn probe_clusters(&self, probes: usize) -> usize {
        self.p.unwrap_or_else(|| default_clusters(probes))
    }

    pub fn gallery_clusters(&self, gallery: usize) -> usize {
        self.g.unwrap_or_else(|| default_clusters(gallery))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRow {
    pub id: String,
    pub knn: f64,
    pub cluster: f64,
    pub lof: f64,
    pub entropy: f64,
    pub fused: f64,
}

/// Raw per-module scores and the fused novelty score, in probe order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub rows: Vec<AnomalyRow>,
}

impl AnomalyReport {
    pub fn fused(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.fused).collect()
    }

    pub fn column(&self, pick: impl Fn(&AnomalyRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(pick).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let wrap = |e: csv::Error| Error::invalid(format!("writing anomaly CSV: {e}"));
        out.write_record(["id", "knn", "cluster", "lof", "entropy", "fused"])
            .map_err(wrap)?;
        for r in &self.rows {
            out.write_record([
                r.id.clone(),
                r.knn.to_string(),
                r.cluster.to_string(),
                r.lof.to_string(),
                r.entropy.to_string(),
                r.fused.to_string(),
            ])
            .map_err(wrap)?;
        }
        out.flush()
            .map_err(|e| Error::invalid(format!("writing anomaly CSV: {e}")))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.rows {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    /// Writes CSV, or JSONL when the extension is `.jsonl`/`.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let w = std::io::BufWriter::new(file);
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => self.write_jsonl(w).map_err(|e| Error::io(path, e)),
            _ => self.write_csv(w),
        }
    }
}

/// Runs all four modules and fuses them.
pub fn detect_anomalies(
    probes: &SampleSet,
    gallery: &SampleSet,
    cfg: &AnomalyConfig,
) -> Result<AnomalyReport> {
    cfg.validate()?;
    if probes.dim() != gallery.dim() {
        return Err(Error::DimensionMismatch {
            expected: gallery.dim(),
            actual: probes.dim(),
            id: None,
        });
    }
    if probes.is_empty() || gallery.is_empty() {
        return Err(Error::EmptySet);
    }
    let (probes_n, gallery_n);
    let (probes, gallery) = if cfg.normalize {
        probes_n = probes.l2_normalized()?;
        gallery_n = gallery.l2_normalized()?;
        (&probes_n, &gallery_n)
    } else {
        (probes, gallery)
    };

    let lof = LofModel::fit(gallery, cfg.k_lof)?;
    let ent = EntropyModel::fit(gallery, cfg.seed)?;
    let clusters = cluster_scores(
        probes,
        gallery,
        cfg.probe_clusters(probes.len()),
        cfg.gallery_clusters(gallery.len()),
        cfg.w1,
        cfg.w2,
        cfg.seed,
    )?;
    let per_probe: Vec<(f64, f64, f64)> = probes
        .records()
        .par_iter()
        .map(|r| {
            Ok((
                knn_score(&r.vec, gallery, cfg.knn_k)?,
                lof.score(&r.vec),
                ent.score(&r.vec)
                    .map_err(|_| Error::ZeroNorm(Some(r.id.clone())))?,
            ))
        })
        .collect::<Result<_>>()?;

    let ids = || probes.iter().map(|r| r.id.clone());
    let to_map = |vals: Vec<f64>| -> BTreeMap<String, f64> { ids().zip(vals).collect() };
    let knn = to_map(per_probe.iter().map(|t| t.0).collect());
    let lofs = to_map(per_probe.iter().map(|t| t.1).collect());
    let entropy = to_map(per_probe.iter().map(|t| t.2).collect());
    let cluster = clusters.to_map();
    let fused = fuse_scores(
        &[&knn, &cluster, &lofs, &entropy],
        &cfg.fusion_weights.as_array(),
    )?;

    let rows = probes
        .iter()
        .map(|r| AnomalyRow {
            id: r.id.clone(),
            knn: knn[&r.id],
            cluster: cluster[&r.id],
            lof: lofs[&r.id],
            entropy: entropy[&r.id],
            fused: fused[&r.id],
        })
        .collect::<Vec<_>>();
    if let Some(bad) = rows.iter().find(|r| {
        ![r.knn, r.cluster, r.lof, r.entropy]
            .iter()
            .all(|x| x.is_finite())
    }) {
        return Err(Error::NonFinite(bad.id.clone()));
    }
    Ok(AnomalyReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::SampleRecord;

    #[test]
    fn config_defaults_and_strictness() {
        let cfg: AnomalyConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, AnomalyConfig::default());
        cfg.validate().unwrap();
        let cfg: AnomalyConfig = serde_json::from_str(r#"{"K":3,"w1":1.0,"w2":0.0}"#).unwrap();
        assert_eq!(cfg.knn_k, 3);
        assert!(serde_json::from_str::<AnomalyConfig>(r#"{"k":3}"#).is_err());
        let bad = AnomalyConfig {
            w1: 0.7,
            ..AnomalyConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(AnomalyConfig::default().gallery_clusters(4), 1);
        assert_eq!(AnomalyConfig::default().gallery_clusters(23), 4);
    }

    #[test]
    fn far_probe_ranks_highest() {
        let gallery = SampleSet::new(
            (0..12)
                .map(|i| {
                    let t = i as f64 * 0.01;
                    SampleRecord::new(format!("g{i:02}"), None, vec![1.0, t, 0.0])
                })
                .collect(),
        )
        .unwrap();
        let probes = SampleSet::new(vec![
            SampleRecord::new("near", None, vec![1.0, 0.05, 0.0]),
            SampleRecord::new("mid", None, vec![1.0, 0.3, 0.1]),
            SampleRecord::new("far", None, vec![0.0, 0.0, 1.0]),
        ])
        .unwrap();
        let cfg = AnomalyConfig {
            p: Some(3),
            ..AnomalyConfig::default()
        };
        let report = detect_anomalies(&probes, &gallery, &cfg).unwrap();
        let fused = report.fused();
        assert_eq!(fused[2], 1.0);
        assert_eq!(fused[0], 0.0);
        assert!(fused[1] > 0.0 && fused[1] < 1.0);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,knn,cluster,lof,entropy,fused\nnear,"));
    }
}
