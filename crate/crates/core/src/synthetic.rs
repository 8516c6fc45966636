//! Seeded Gaussian-blob embeddings for open-set experiments.
//!
//! Class `i` is centered at `offset·1 + spread·e_i`, so all centers are
//! pairwise `spread·√2` apart. The noise σ is chosen so that this distance
//! equals `separation` standard deviations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{SampleRecord, SampleSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub dim: usize,
    /// Classes present in the gallery.
    pub known: usize,
    /// Classes seen only among the probes.
    pub novel: usize,
    pub gallery_per_class: usize,
    /// Held-out probes per known class.
    pub probes_per_known: usize,
    pub probes_per_novel: usize,
    /// Distance between centers, in units of σ.
    pub separation: f64,
    pub offset: f64,
    pub spread: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            dim: 8,
            known: 4,
            novel: 1,
            gallery_per_class: 40,
            probes_per_known: 10,
            probes_per_novel: 20,
            separation: 10.0,
            offset: 0.25,
            spread: 1.0,
            seed: 2022,
        }
    }
}

/// Gallery, probes and the ground truth of which probes are novel.
#[derive(Debug, Clone)]
pub struct OpenSetData {
    pub gallery: SampleSet,
    pub probes: SampleSet,
    /// Parallel to `probes`.
    pub is_novel: Vec<bool>,
}

impl BlobSpec {
    pub fn sigma(&self) -> f64 {
        self.spread * std::f64::consts::SQRT_2 / self.separation
    }

    pub fn center(&self, class: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|d| self.offset + if d == class { self.spread } else { 0.0 })
            .collect()
    }

    pub fn generate(&self) -> Result<OpenSetData> {
        let classes = self.known + self.novel;
        if self.known == 0 || classes > self.dim {
            return Err(Error::invalid(format!(
                "need 1 <= known and known + novel <= dim, got {} + {} and dim {}",
                self.known, self.novel, self.dim
            )));
        }
        if !(self.separation > 0.0 && self.spread > 0.0) {
            return Err(Error::invalid("separation and spread must be positive"));
        }
        let normal = Normal::new(0.0, self.sigma()).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut draw = |class: usize| -> Vec<f64> {
            self.center(class)
                .into_iter()
                .map(|c| c + normal.sample(&mut rng))
                .collect()
        };

        let mut gallery = Vec::new();
        let mut probes = Vec::new();
        let mut is_novel = Vec::new();
        for class in 0..classes {
            let label = format!("blob-{class}");
            if class < self.known {
                for i in 0..self.gallery_per_class {
                    gallery.push(SampleRecord::new(
                        format!("g-{class}-{i:03}"),
                        Some(&label),
                        draw(class),
                    ));
                }
            }
            let (count, novel) = if class < self.known {
                (self.probes_per_known, false)
            } else {
                (self.probes_per_novel, true)
            };
            for i in 0..count {
                probes.push(SampleRecord::new(
                    format!("p-{class}-{i:03}"),
                    Some(&label),
                    draw(class),
                ));
                is_novel.push(novel);
            }
        }
        Ok(OpenSetData {
            gallery: SampleSet::new(gallery)?,
            probes: SampleSet::new(probes)?,
            is_novel,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn centers_are_separation_sigmas_apart() {
        let spec = BlobSpec::default();
        let d = linalg::euclidean(&spec.center(0), &spec.center(3));
        assert!((d / spec.sigma() - spec.separation).abs() < 1e-12);
    }

    #[test]
    fn shapes_and_determinism() {
        let spec = BlobSpec::default();
        let a = spec.generate().unwrap();
        assert_eq!(a.gallery.len(), 160);
        assert_eq!(a.probes.len(), 60);
        assert_eq!(a.is_novel.iter().filter(|&&n| n).count(), 20);
        let b = spec.generate().unwrap();
        assert_eq!(a.probes, b.probes);
        let too_many = BlobSpec {
            known: 8,
            ..BlobSpec::default()
        };
        assert!(too_many.generate().is_err());
    }
}
