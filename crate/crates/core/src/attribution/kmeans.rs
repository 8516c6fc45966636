//! Lloyd's algorithm with k-means++ seeding, plus the constrained variant
//! in which labeled samples stay pinned to their class cluster.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::SampleSet;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansParams {
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iter() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-9
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }
}

/// Result of a (semi-supervised) k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Sample ids, in input order (labeled before unlabeled for `ss_kmeans`).
    pub ids: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per entry of `ids`.
    pub assignment: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    /// Inertia after each assignment step, starting with the seeding.
    pub trace: Vec<f64>,
    /// Class name of each cluster; `None` for novel clusters.
    pub cluster_labels: Vec<Option<String>>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.ids
            .iter()
            .position(|i| i == id)
            .map(|p| self.assignment[p])
    }

    /// JSON document with centroids and an id → cluster map.
    pub fn to_json(&self) -> serde_json::Value {
        let assignment: BTreeMap<&str, usize> = self
            .ids
            .iter()
            .map(String::as_str)
            .zip(self.assignment.iter().copied())
            .collect();
        serde_json::json!({
            "k": self.k(),
            "centroids": self.centroids,
            "cluster_labels": self.cluster_labels,
            "assignment": assignment,
            "inertia": self.inertia,
        })
    }
}

/// Lloyd iteration state hooks: `(iteration, assignment, inertia)`.
pub type Observer<'o> = &'o mut dyn FnMut(usize, &[usize], f64);

struct Problem<'a> {
    points: Vec<&'a [f64]>,
    /// Pinned cluster per point, if any.
    fixed: Vec<Option<usize>>,
    dim: usize,
}

impl Problem<'_> {
    fn assign(&self, centroids: &[Vec<f64>]) -> Vec<usize> {
        self.points
            .par_iter()
            .zip(self.fixed.par_iter())
            .map(|(p, fixed)| fixed.unwrap_or_else(|| nearest(p, centroids).0))
            .collect()
    }

    fn inertia(&self, centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
        self.points
            .iter()
            .zip(assignment)
            .map(|(p, &c)| linalg::squared_distance(p, &centroids[c]))
            .sum()
    }

    fn update(&self, assignment: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut sums = vec![vec![0.0; self.dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in self.points.iter().zip(assignment) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for (s, &n) in sums.iter_mut().zip(&counts) {
            if n > 0 {
                let n = n as f64;
                s.iter_mut().for_each(|v| *v /= n);
            }
        }
        (sums, counts)
    }

    /// Moves every empty cluster onto the free point farthest from its
    /// current centroid.
    fn repair_empty(&self, centroids: &mut [Vec<f64>], counts: &[usize], assignment: &[usize]) {
        let mut taken = HashSet::new();
        for c in 0..centroids.len() {
            if counts[c] > 0 {
                continue;
            }
            let far = self
                .points
                .iter()
                .enumerate()
                .filter(|(i, _)| self.fixed[*i].is_none() && !taken.contains(i))
                .map(|(i, p)| (i, linalg::squared_distance(p, &centroids[assignment[i]])))
                .fold(None::<(usize, f64)>, |best, cur| match best {
                    Some(b) if b.1 >= cur.1 => Some(b),
                    _ => Some(cur),
                });
            if let Some((i, _)) = far {
                taken.insert(i);
                centroids[c] = self.points[i].to_vec();
            }
        }
    }

    fn run(
        &self,
        mut centroids: Vec<Vec<f64>>,
        max_iter: usize,
        tol: f64,
        observer: Option<Observer<'_>>,
    ) -> (Vec<Vec<f64>>, Vec<usize>, f64, Vec<f64>) {
        let mut observer = observer;
        let k = centroids.len();
        let mut assignment = self.assign(&centroids);
        let mut inertia = self.inertia(&centroids, &assignment);
        let mut trace = vec![inertia];
        if let Some(obs) = observer.as_mut() {
            obs(0, &assignment, inertia);
        }

        for iter in 1..=max_iter {
            let (mut next, counts) = self.update(&assignment, k);
            self.repair_empty(&mut next, &counts, &assignment);
            let next_assignment = self.assign(&next);
            let next_inertia = self.inertia(&next, &next_assignment);
            // Mean updates only ever lower the objective; a rise here is
            // floating-point noise at convergence.
            if next_inertia > inertia {
                break;
            }
            let shift = centroids
                .iter()
                .zip(&next)
                .map(|(a, b)| linalg::euclidean(a, b))
                .fold(0.0, f64::max);
            let unchanged = next_assignment == assignment;
            centroids = next;
            assignment = next_assignment;
            inertia = next_inertia;
            trace.push(inertia);
            if let Some(obs) = observer.as_mut() {
                obs(iter, &assignment, inertia);
            }
            if unchanged || shift < tol {
                break;
            }
        }
        (centroids, assignment, inertia, trace)
    }
}

/// Index and squared distance of the closest centroid (lowest index on ties).
pub(crate) fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = linalg::squared_distance(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Index drawn with probability proportional to `weights` (uniform if all
/// weights vanish).
fn sample_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.random_range(0..weights.len());
    }
    let r = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        acc += w;
        if w > 0.0 && acc > r {
            return j;
        }
    }
    // Rounding can leave r just above the final partial sum.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Greedy k-means++: each new centroid is the best of `2 + ⌊ln k⌋`
/// candidates drawn from `candidates` with probability proportional to their
/// squared distance to the closest existing centroid, where "best" means the
/// lowest resulting potential.
fn kmeanspp(
    points: &[&[f64]],
    candidates: &[usize],
    mut centroids: Vec<Vec<f64>>,
    extra: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    if extra == 0 {
        return centroids;
    }
    let target = centroids.len() + extra;
    let trials = 2 + (target as f64).ln().floor() as usize;
    if centroids.is_empty() {
        let first = candidates[rng.random_range(0..candidates.len())];
        centroids.push(points[first].to_vec());
    }
    let mut d2: Vec<f64> = candidates
        .iter()
        .map(|&i| nearest(points[i], &centroids).1)
        .collect();
    while centroids.len() < target {
        // (potential, candidate index, updated distances)
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = sample_weighted(&d2, rng);
            let c = points[candidates[pick]];
            let next: Vec<f64> = candidates
                .iter()
                .zip(&d2)
                .map(|(&i, &d)| d.min(linalg::squared_distance(points[i], c)))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|(p, _, _)| potential < *p) {
                best = Some((potential, pick, next));
            }
        }
        let (_, pick, next) = best.expect("at least one trial");
        centroids.push(points[candidates[pick]].to_vec());
        d2 = next;
    }
    centroids
}

/// Plain k-means on squared Euclidean distance.
pub fn kmeans(data: &SampleSet, params: &KMeansParams) -> Result<Clustering> {
    kmeans_observed(data, params, None)
}

pub fn kmeans_observed(
    data: &SampleSet,
    params: &KMeansParams,
    observer: Option<Observer<'_>>,
) -> Result<Clustering> {
    validate(params)?;
    if params.k > data.len() {
        return Err(Error::invalid(format!(
            "k = {} exceeds sample count {}",
            params.k,
            data.len()
        )));
    }
    let problem = Problem {
        points: data.vectors().collect(),
        fixed: vec![None; data.len()],
        dim: data.dim(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let candidates: Vec<usize> = (0..data.len()).collect();
    let init = kmeanspp(&problem.points, &candidates, Vec::new(), params.k, &mut rng);
    let (centroids, assignment, inertia, trace) =
        problem.run(init, params.max_iter, params.tol, observer);
    Ok(Clustering {
        ids: data.iter().map(|r| r.id.clone()).collect(),
        cluster_labels: vec![None; centroids.len()],
        centroids,
        assignment,
        inertia,
        trace,
    })
}

/// Semi-supervised k-means. One cluster per labeled class (sorted by class
/// name, initialized at the class mean) plus `k_extra` novel clusters seeded
/// by k-means++ over the unlabeled samples. Labeled samples never move.
pub fn ss_kmeans(
    labeled: &SampleSet,
    unlabeled: &SampleSet,
    k_extra: usize,
    params: &KMeansParams,
) -> Result<Clustering> {
    ss_kmeans_observed(labeled, unlabeled, k_extra, params, None)
}

/// `params.k` is ignored; the cluster count is `classes + k_extra`.
pub fn ss_kmeans_observed(
    labeled: &SampleSet,
    unlabeled: &SampleSet,
    k_extra: usize,
    params: &KMeansParams,
    observer: Option<Observer<'_>>,
) -> Result<Clustering> {
    if params.max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    if labeled.is_empty() {
        return Err(Error::invalid(
            "semi-supervised k-means needs at least one labeled class",
        ));
    }
    if labeled.dim() != unlabeled.dim() {
        return Err(Error::DimensionMismatch {
            expected: labeled.dim(),
            actual: unlabeled.dim(),
            id: None,
        });
    }
    let mut seen = HashSet::new();
    for r in labeled.iter().chain(unlabeled.iter()) {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateId(r.id.clone()));
        }
    }

    let mut classes: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for r in labeled {
        let label = r
            .label
            .as_deref()
            .ok_or_else(|| Error::MissingLabel(r.id.clone()))?;
        classes.entry(label).or_default().push(&r.vec);
    }
    let class_index: BTreeMap<&str, usize> =
        classes.keys().enumerate().map(|(i, &l)| (l, i)).collect();

    let k = classes.len() + k_extra;
    let total = labeled.len() + unlabeled.len();
    if k > total {
        return Err(Error::invalid(format!(
            "k = {k} exceeds sample count {total}"
        )));
    }
    if k_extra > unlabeled.len() {
        return Err(Error::invalid(format!(
            "{k_extra} novel clusters need at least as many unlabeled samples, got {}",
            unlabeled.len()
        )));
    }

    let class_means: Vec<Vec<f64>> = classes
        .values()
        .map(|vs| linalg::mean(vs.iter().copied(), labeled.dim()).ok_or(Error::EmptySet))
        .collect::<Result<_>>()?;

    let mut points: Vec<&[f64]> = labeled.vectors().collect();
    points.extend(unlabeled.vectors());
    let mut fixed: Vec<Option<usize>> = labeled
        .iter()
        .map(|r| r.label.as_deref().map(|l| class_index[l]))
        .collect();
    fixed.extend(std::iter::repeat_n(None, unlabeled.len()));

    let candidates: Vec<usize> = (labeled.len()..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = kmeanspp(&points, &candidates, class_means, k_extra, &mut rng);

    let problem = Problem {
        points,
        fixed,
        dim: labeled.dim(),
    };
    let (centroids, assignment, inertia, trace) =
        problem.run(init, params.max_iter, params.tol, observer);

    let mut cluster_labels: Vec<Option<String>> =
        classes.keys().map(|l| Some(l.to_string())).collect();
    cluster_labels.resize(k, None);
    Ok(Clustering {
        ids: labeled
            .iter()
            .chain(unlabeled.iter())
            .map(|r| r.id.clone())
            .collect(),
        centroids,
        assignment,
        inertia,
        trace,
        cluster_labels,
    })
}

fn validate(params: &KMeansParams) -> Result<()> {
    if params.k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if params.max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    if params.tol.is_nan() || params.tol < 0.0 {
        return Err(Error::invalid("tol must be non-negative"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::SampleRecord;

    fn set(points: &[(&str, Option<&str>, &[f64])]) -> SampleSet {
        SampleSet::new(
            points
                .iter()
                .map(|(id, l, v)| SampleRecord::new(*id, *l, v.to_vec()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let data = set(&[
            ("a", None, &[0.0, 0.0]),
            ("b", None, &[1.0, 5.0]),
            ("c", None, &[-3.0, 2.0]),
            ("d", None, &[4.0, 4.0]),
        ]);
        let c = kmeans(&data, &KMeansParams::new(4, 7)).unwrap();
        assert_eq!(c.inertia, 0.0);
        let mut assigned = c.assignment.clone();
        assigned.sort_unstable();
        assert_eq!(assigned, vec![0, 1, 2, 3]);
    }

    #[test]
    fn two_duplicate_pairs() {
        let data = set(&[
            ("a", None, &[0.0, 0.0]),
            ("b", None, &[0.0, 0.0]),
            ("c", None, &[9.0, 9.0]),
            ("d", None, &[9.0, 9.0]),
        ]);
        for seed in 0..20 {
            let c = kmeans(&data, &KMeansParams::new(2, seed)).unwrap();
            let mut cents = c.centroids.clone();
            cents.sort_by(|a, b| a[0].total_cmp(&b[0]));
            assert_eq!(cents, vec![vec![0.0, 0.0], vec![9.0, 9.0]]);
            assert_eq!(c.inertia, 0.0);
        }
    }

    #[test]
    fn invalid_k() {
        let data = set(&[("a", None, &[0.0])]);
        assert!(kmeans(&data, &KMeansParams::new(0, 0)).is_err());
        assert!(kmeans(&data, &KMeansParams::new(2, 0)).is_err());
    }

    #[test]
    fn ss_without_unlabeled_returns_class_means() {
        let labeled = set(&[
            ("a1", Some("A"), &[0.0, 1.0]),
            ("a2", Some("A"), &[2.0, 3.0]),
            ("b1", Some("B"), &[10.0, 10.0]),
        ]);
        let unlabeled = SampleSet::empty(2).unwrap();
        let c = ss_kmeans(&labeled, &unlabeled, 0, &KMeansParams::new(0, 1)).unwrap();
        assert_eq!(c.centroids, vec![vec![1.0, 2.0], vec![10.0, 10.0]]);
        assert_eq!(c.cluster_labels, vec![Some("A".into()), Some("B".into())]);
    }

    #[test]
    fn ss_near_point_joins_its_class() {
        let labeled = set(&[
            ("a", Some("A"), &[0.0, 0.0]),
            ("b", Some("B"), &[10.0, 10.0]),
        ]);
        let unlabeled = set(&[("u", None, &[0.1, 0.0])]);
        let c = ss_kmeans(&labeled, &unlabeled, 0, &KMeansParams::new(0, 3)).unwrap();
        assert_eq!(c.cluster_of("u"), Some(0));
        assert_eq!(c.cluster_of("a"), Some(0));
        assert_eq!(c.cluster_of("b"), Some(1));
    }

    #[test]
    fn ss_errors() {
        let labeled = set(&[("a", Some("A"), &[0.0])]);
        let unlabeled = set(&[("u", None, &[1.0])]);
        assert!(ss_kmeans(&labeled, &unlabeled, 2, &KMeansParams::new(0, 0)).is_err());
        let dup = set(&[("a", None, &[1.0])]);
        assert!(matches!(
            ss_kmeans(&labeled, &dup, 0, &KMeansParams::new(0, 0)),
            Err(Error::DuplicateId(_))
        ));
        let unlabeled_labeled = set(&[("x", None, &[1.0])]);
        assert!(matches!(
            ss_kmeans(&unlabeled_labeled, &unlabeled, 0, &KMeansParams::new(0, 0)),
            Err(Error::MissingLabel(_))
        ));
    }

    #[test]
    fn ss_novel_cluster_captures_far_points() {
        let labeled = set(&[
            ("a", Some("A"), &[0.0, 0.0]),
            ("a2", Some("A"), &[0.2, 0.0]),
        ]);
        let unlabeled = set(&[
            ("u1", None, &[0.1, 0.1]),
            ("n1", None, &[50.0, 50.0]),
            ("n2", None, &[50.5, 50.0]),
        ]);
        let c = ss_kmeans(&labeled, &unlabeled, 1, &KMeansParams::new(0, 11)).unwrap();
        assert_eq!(c.cluster_of("u1"), Some(0));
        assert_eq!(c.cluster_of("n1"), Some(1));
        assert_eq!(c.cluster_of("n2"), Some(1));
        assert_eq!(c.cluster_labels[1], None);
    }

    #[test]
    fn observer_sees_monotone_trace() {
        let data = set(&[
            ("a", None, &[0.0]),
            ("b", None, &[1.0]),
            ("c", None, &[2.0]),
            ("d", None, &[10.0]),
            ("e", None, &[11.0]),
            ("f", None, &[30.0]),
        ]);
        let mut seen = Vec::new();
        let mut obs = |_: usize, _: &[usize], j: f64| seen.push(j);
        let c = kmeans_observed(&data, &KMeansParams::new(3, 5), Some(&mut obs)).unwrap();
        assert_eq!(seen, c.trace);
        assert!(c.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn json_has_assignment_map() {
        let data = set(&[("a", None, &[0.0]), ("b", None, &[4.0])]);
        let c = kmeans(&data, &KMeansParams::new(2, 0)).unwrap();
        let j = c.to_json();
        assert!(j["assignment"]["a"].is_u64());
        assert_eq!(j["k"], 2);
    }
}
