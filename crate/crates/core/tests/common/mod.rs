//! Brute-force oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use aisc::dataio::{SampleRecord, SampleSet};
use aisc::patchcheck::{BinaryMask, Connectivity};
use aisc::patchopt::Texture;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn random_set(
    rng: &mut ChaCha8Rng,
    n: usize,
    dim: usize,
    prefix: &str,
    labels: &[&str],
) -> SampleSet {
    let records = (0..n)
        .map(|i| {
            let vec = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let label = if labels.is_empty() {
                None
            } else {
                Some(labels[rng.random_range(0..labels.len())])
            };
            SampleRecord::new(format!("{prefix}{i:04}"), label, vec)
        })
        .collect();
    SampleSet::new(records).unwrap()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Full scan: every gallery similarity, fully sorted.
pub fn brute_top_k(probe: &[f64], gallery: &SampleSet, k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = gallery
        .iter()
        .map(|g| {
            let dot: f64 = probe.iter().zip(&g.vec).map(|(a, b)| a * b).sum();
            (
                g.id.clone(),
                (dot / (norm(probe) * norm(&g.vec))).clamp(-1.0, 1.0),
            )
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn brute_precision(probes: &SampleSet, gallery: &SampleSet) -> f64 {
    let labels: HashMap<&str, &str> = gallery
        .iter()
        .map(|g| (g.id.as_str(), g.label.as_deref().unwrap()))
        .collect();
    let mut hits = 0usize;
    for p in probes {
        for (id, _) in brute_top_k(&p.vec, gallery, 5) {
            if labels[id.as_str()] == p.label.as_deref().unwrap() {
                hits += 1;
            }
        }
    }
    hits as f64 / (5 * probes.len()) as f64
}

/// O(P·N) pair count.
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut ties, mut pairs) = (0u64, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1;
            } else if scores[i] == scores[j] {
                ties += 1;
            }
        }
    }
    (wins as f64 + 0.5 * ties as f64) / pairs as f64
}

pub fn knn_oracle(probe: &[f64], gallery: &SampleSet, k: usize) -> f64 {
    let mut d: Vec<f64> = gallery.iter().map(|g| euclid(probe, &g.vec)).collect();
    d.sort_by(f64::total_cmp);
    d[..k].iter().sum::<f64>() / k as f64
}

/// LOF straight from the definition, over a full distance matrix.
pub fn lof_oracle(probe: &[f64], gallery: &SampleSet, k: usize) -> f64 {
    let pts: Vec<&[f64]> = gallery.vectors().collect();
    let n = pts.len();
    let knn = |dists: Vec<(usize, f64)>| -> Vec<(usize, f64)> {
        let mut d = dists;
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d.truncate(k);
        d
    };
    let hoods: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            knn((0..n)
                .filter(|&j| j != i)
                .map(|j| (j, euclid(pts[i], pts[j])))
                .collect())
        })
        .collect();
    let kdist: Vec<f64> = hoods.iter().map(|h| h.last().unwrap().1).collect();
    let lrd = |hood: &[(usize, f64)]| -> f64 {
        let reach: f64 = hood.iter().map(|&(j, d)| d.max(kdist[j])).sum::<f64>() / k as f64;
        1.0 / reach.max(1e-12)
    };
    let lrds: Vec<f64> = hoods.iter().map(|h| lrd(h)).collect();
    let ph = knn((0..n).map(|j| (j, euclid(probe, pts[j]))).collect());
    let mean_lrd: f64 = ph.iter().map(|&(j, _)| lrds[j]).sum::<f64>() / k as f64;
    mean_lrd / lrd(&ph).max(1e-12)
}

/// Component sizes by explicit-stack flood fill, in raster order of seeds.
pub fn flood_fill_sizes(mask: &BinaryMask, conn: Connectivity) -> Vec<usize> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut sizes = Vec::new();
    let offsets: &[(i64, i64)] = match conn {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ],
    };
    for y0 in 0..h {
        for x0 in 0..w {
            if !mask.get(x0, y0) || seen[y0 * w + x0] {
                continue;
            }
            let mut size = 0;
            let mut stack = vec![(x0, y0)];
            seen[y0 * w + x0] = true;
            while let Some((x, y)) = stack.pop() {
                size += 1;
                for &(dx, dy) in offsets {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if mask.get(nx, ny) && !seen[ny * w + nx] {
                        seen[ny * w + nx] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            sizes.push(size);
        }
    }
    sizes
}

pub fn random_mask(rng: &mut ChaCha8Rng, max_side: usize) -> BinaryMask {
    let w = rng.random_range(1..=max_side);
    let h = rng.random_range(1..=max_side);
    let density: f64 = rng.random_range(0.05..0.7);
    let bits = (0..w * h).map(|_| rng.random_bool(density)).collect();
    BinaryMask::new(w, h, bits).unwrap()
}

pub fn random_texture(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Texture {
    Texture::from_fn(h, w, c, |_, _, _| rng.random_range(0.05..0.95))
}

/// Central differences of `f` at every coordinate of `x`.
pub fn numeric_grad(x: &Texture, step: f64, f: impl Fn(&Texture) -> f64) -> Texture {
    let mut g = x.zeros_like();
    let mut probe = x.clone();
    for i in 0..x.data().len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(&probe);
        probe.data_mut()[i] = orig - step;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        g.data_mut()[i] = (up - down) / (2.0 * step);
    }
    g
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or the absolute gap when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = euclid(a, b);
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Relabels clusters by order of first appearance so partitions compare.
pub fn canonical_partition(assignment: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    assignment
        .iter()
        .map(|a| {
            let next = map.len();
            *map.entry(*a).or_insert(next)
        })
        .collect()
}

/// Isotropic Gaussian blobs whose centers sit `separation` σ apart.
pub fn blobs(rng: &mut ChaCha8Rng, centers: &[Vec<f64>], per: usize, sigma: f64) -> SampleSet {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut records = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for i in 0..per {
            let v = center.iter().map(|x| x + normal.sample(rng)).collect();
            records.push(SampleRecord::new(
                format!("b{c}-{i:03}"),
                Some(&format!("c{c}")),
                v,
            ));
        }
    }
    SampleSet::new(records).unwrap()
}

/// Runs the CLI binary and captures its output.
pub fn run_cli(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_aisc"))
        .args(args)
        .output()
        .expect("spawn cli")
}

/// Writes the open-set blob benchmark as probe/gallery JSONL files.
pub fn write_blob_files(dir: &std::path::Path) -> (String, String) {
    use aisc::dataio::{save_samples, SampleFormat};
    let data = aisc::synthetic::BlobSpec::default().generate().unwrap();
    let probe = dir.join("probe.jsonl");
    let gallery = dir.join("gallery.jsonl");
    save_samples(&data.probes, &probe, SampleFormat::Jsonl).unwrap();
    save_samples(&data.gallery, &gallery, SampleFormat::Jsonl).unwrap();
    (probe.display().to_string(), gallery.display().to_string())
}

/// A small optimize config exercising noise, batching and jitter.
pub fn write_optimize_config(dir: &std::path::Path, iterations: usize) -> String {
    let path = dir.join(format!("opt-{iterations}.json"));
    let cfg = serde_json::json!({
        "patch": {"height": 16, "width": 16},
        "scene": {"frame_width": 48, "frame_height": 48, "frame_indices": [0, 10, 20, 30],
                  "pinhole": {"n": 60, "base_box": [14.0, 14.0, 34.0, 34.0]}, "seed": 3, "bias": 2.0},
        "run": {"iterations": iterations, "seed": 9, "optimizer": {"kind": "adam"},
                "weights": {"alpha": 1.0, "beta": 0.001, "step_size": 0.02},
                "batch_size": 3, "scale_jitter": [0.9, 1.1]}
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.display().to_string()
}
