use std::cmp::Ordering;

use crate::dataio::SampleSet;
use crate::error::{Error, Result};
use crate::linalg;

/// Floor applied to mean reachability distances and to the probe density.
pub const DENSITY_EPS: f64 = 1e-12;

/// Local outlier factor of new points against a fixed reference gallery.
///
/// Neighborhoods hold exactly `k` points (ties by gallery order); a gallery
/// point never counts itself as a neighbor.
#[derive(Debug, Clone)]
pub struct LofModel {
    points: Vec<Vec<f64>>,
    k: usize,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
}

fn by_distance(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

fn neighbors<'a>(
    point: &[f64],
    points: impl Iterator<Item = (usize, &'a [f64])>,
    k: usize,
) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> = points
        .map(|(i, q)| (i, linalg::euclidean(point, q)))
        .collect();
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, by_distance);
        d.truncate(k);
    }
    d.sort_by(by_distance);
    d
}

impl LofModel {
    pub fn fit(gallery: &SampleSet, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("LOF k must be positive"));
        }
        if gallery.len() < k + 1 {
            return Err(Error::invalid(format!(
                "LOF with k = {k} needs at least {} gallery points, got {}",
                k + 1,
                gallery.len()
            )));
        }
        let points: Vec<Vec<f64>> = gallery.vectors().map(<[f64]>::to_vec).collect();
        let hoods: Vec<Vec<(usize, f64)>> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                neighbors(
                    p,
                    points
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(j, q)| (j, q.as_slice())),
                    k,
                )
            })
            .collect();
        let k_distance: Vec<f64> = hoods.iter().map(|h| h[k - 1].1).collect();
        let lrd = hoods
            .iter()
            .map(|h| local_density(h, &k_distance))
            .collect();
        Ok(LofModel {
            points,
            k,
            k_distance,
            lrd,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn score(&self, probe: &[f64]) -> f64 {
        let hood = neighbors(
            probe,
            self.points.iter().map(Vec::as_slice).enumerate(),
            self.k,
        );
        let lrd_probe = local_density(&hood, &self.k_distance);
        let mean_neighbor_lrd = hood.iter().map(|&(j, _)| self.lrd[j]).sum::<f64>() / self.k as f64;
        mean_neighbor_lrd / lrd_probe.max(DENSITY_EPS)
    }
}

/// `1 / mean(reach-dist)`, with reach-dist(p, o) = max(k-distance(o), d(p, o)).
fn local_density(hood: &[(usize, f64)], k_distance: &[f64]) -> f64 {
    let mean_reach =
        hood.iter().map(|&(j, d)| k_distance[j].max(d)).sum::<f64>() / hood.len() as f64;
    1.0 / mean_reach.max(DENSITY_EPS)
}

pub fn lof_score(probe: &[f64], gallery: &SampleSet, k: usize) -> Result<f64> {
    super::knn::check_dim(probe, gallery)?;
    Ok(LofModel::fit(gallery, k)?.score(probe))
}
