mod common;

use std::collections::BTreeMap;

use aisc::attribution::*;
use aisc::dataio::{SampleRecord, SampleSet};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn split(seed: u64) -> (SampleSet, SampleSet, usize) {
    let mut r = rng(seed);
    let dim = r.random_range(1..4);
    let n_lab = r.random_range(1..12);
    let labeled = random_set(&mut r, n_lab, dim, "l", &["a", "b", "c"]);
    let n_unl = r.random_range(1..15);
    let unlabeled = random_set(&mut r, n_unl, dim, "u", &[]);
    let k_extra = r.random_range(0..=n_unl.min(3));
    (labeled, unlabeled, k_extra)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn labeled_points_stay_pinned(seed in any::<u64>()) {
        let (labeled, unlabeled, k_extra) = split(seed);
        let n_lab = labeled.len();
        let params = KMeansParams::new(0, seed);
        let mut violations = 0usize;
        let mut expected: Option<Vec<usize>> = None;
        let mut obs = |_: usize, a: &[usize], _: f64| {
            let now = a[..n_lab].to_vec();
            match &expected {
                Some(e) if *e != now => violations += 1,
                None => expected = Some(now),
                _ => {}
            }
        };
        let c = ss_kmeans_observed(&labeled, &unlabeled, k_extra, &params, Some(&mut obs)).unwrap();
        prop_assert_eq!(violations, 0);
        for (i, r) in labeled.iter().enumerate() {
            prop_assert_eq!(c.cluster_labels[c.assignment[i]].as_deref(), r.label.as_deref());
        }
        prop_assert!(c.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn kmeans_trace_is_monotone(seed in any::<u64>(), n in 2usize..40, k in 1usize..6) {
        let mut r = rng(seed);
        let set = random_set(&mut r, n, 2, "x", &[]);
        let c = kmeans(&set, &KMeansParams::new(k.min(n), seed)).unwrap();
        prop_assert!(c.trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(c.assignment.len(), n);
        prop_assert!(c.assignment.iter().all(|&a| a < c.k()));
    }

    #[test]
    fn pseudo_labels_respect_thresholds(seed in any::<u64>(), top in 0.3f64..1.0, min_count in 1usize..5, min_score in 0.0f64..0.9) {
        let mut r = rng(seed);
        let candidates: BTreeMap<String, (String, f64)> = (0..30)
            .map(|i| (format!("s{i:02}"), (["a", "b", "c"][r.random_range(0..3)].to_string(), r.random_range(0.0..1.0))))
            .collect();
        let th = PseudoLabelThresholds { top_frac: top, min_class_count: min_count, min_score };
        let report = assign_pseudo_labels(&candidates, &th).unwrap();
        prop_assert_eq!(report.accepted.len() + report.rejected.len(), candidates.len());
        let mut per_class: BTreeMap<&str, usize> = BTreeMap::new();
        for (id, label) in &report.accepted {
            prop_assert!(candidates[id].1 >= min_score);
            prop_assert_eq!(&candidates[id].0, label);
            *per_class.entry(label).or_default() += 1;
        }
        prop_assert!(report.accepted.len() <= (top * 30.0).ceil() as usize);
    }
}

#[test]
fn recovers_three_blobs() {
    let centers = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]];
    let mut r = rng(3);
    let set = blobs(&mut r, &centers, 30, 0.5);
    let c = kmeans(&set, &KMeansParams::new(3, 1)).unwrap();
    let truth: Vec<usize> = (0..90).map(|i| i / 30).collect();
    assert_eq!(
        canonical_partition(&c.assignment),
        canonical_partition(&truth)
    );
}

#[test]
fn novel_cluster_found_by_ss_kmeans() {
    let mut records = Vec::new();
    for i in 0..10 {
        let t = i as f64 * 0.01;
        records.push(SampleRecord::new(format!("a{i}"), Some("a"), vec![t, 0.0]));
        records.push(SampleRecord::new(
            format!("b{i}"),
            Some("b"),
            vec![5.0 + t, 0.0],
        ));
    }
    let labeled = SampleSet::new(records).unwrap();
    let unlabeled = SampleSet::new(
        (0..6)
            .map(|i| SampleRecord::new(format!("u{i}"), None, vec![0.0, 8.0 + i as f64 * 0.01]))
            .collect(),
    )
    .unwrap();
    let c = ss_kmeans(&labeled, &unlabeled, 1, &KMeansParams::new(0, 4)).unwrap();
    let novel = c.cluster_of("u0").unwrap();
    assert_eq!(c.cluster_labels[novel], None);
    assert!((0..6).all(|i| c.cluster_of(&format!("u{i}")) == Some(novel)));
}
