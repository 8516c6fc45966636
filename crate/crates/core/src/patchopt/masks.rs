use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patchcheck::{connected_components, BinaryMask, Connectivity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockShape {
    Triangle,
    Ellipse,
    Rectangle,
}

/// Parameters for [`random_block_mask`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockMaskSpec {
    pub width: usize,
    pub height: usize,
    pub shapes: Vec<BlockShape>,
    pub count: usize,
    pub max_area: usize,
    #[serde(default = "default_max_components")]
    pub max_components: usize,
    /// Block side lengths are drawn from `min_side..=max_side`.
    pub min_side: usize,
    pub max_side: usize,
    #[serde(default = "default_retries")]
    pub retries: usize,
}

fn default_max_components() -> usize {
    5
}

fn default_retries() -> usize {
    1000
}

impl BlockMaskSpec {
    pub fn new(width: usize, height: usize, count: usize, max_area: usize) -> Self {
        let side = (width.min(height) / 4).max(1);
        BlockMaskSpec {
            width,
            height,
            shapes: vec![
                BlockShape::Triangle,
                BlockShape::Ellipse,
                BlockShape::Rectangle,
            ],
            count,
            max_area,
            max_components: default_max_components(),
            min_side: side.min(3),
            max_side: side,
            retries: default_retries(),
        }
    }
}

fn draw_block(
    mask: &mut BinaryMask,
    shape: BlockShape,
    rng: &mut ChaCha8Rng,
    spec: &BlockMaskSpec,
) {
    let bw = rng
        .random_range(spec.min_side..=spec.max_side)
        .min(spec.width);
    let bh = rng
        .random_range(spec.min_side..=spec.max_side)
        .min(spec.height);
    let x0 = rng.random_range(0..=spec.width - bw);
    let y0 = rng.random_range(0..=spec.height - bh);
    match shape {
        BlockShape::Rectangle => {
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    mask.set(x, y, true);
                }
            }
        }
        BlockShape::Ellipse => {
            let (a, b) = (bw as f64 / 2.0, bh as f64 / 2.0);
            let (cx, cy) = (x0 as f64 + a, y0 as f64 + b);
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    let dx = (x as f64 + 0.5 - cx) / a;
                    let dy = (y as f64 + 0.5 - cy) / b;
                    if dx * dx + dy * dy <= 1.0 {
                        mask.set(x, y, true);
                    }
                }
            }
            mask.set(x0 + bw / 2, y0 + bh / 2, true);
        }
        BlockShape::Triangle => {
            let mut vertex = || {
                (
                    x0 as f64 + rng.random::<f64>() * bw as f64,
                    y0 as f64 + rng.random::<f64>() * bh as f64,
                )
            };
            let (a, b, c) = (vertex(), vertex(), vertex());
            let edge = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| {
                (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
            };
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    let p = (x as f64 + 0.5, y as f64 + 0.5);
                    let (e0, e1, e2) = (edge(a, b, p), edge(b, c, p), edge(c, a, p));
                    let inside = (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0)
                        || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0);
                    if inside {
                        mask.set(x, y, true);
                    }
                }
            }
            // Thin triangles may miss every pixel center; keep the first vertex.
            let vx = (a.0.floor() as usize).min(spec.width - 1);
            let vy = (a.1.floor() as usize).min(spec.height - 1);
            mask.set(vx, vy, true);
        }
    }
}

/// Places `count` random blocks on a blank canvas, redrawing the whole mask
/// until it has at most `max_components` 8-connected regions and at most
/// `max_area` pixels.
pub fn random_block_mask(spec: &BlockMaskSpec, seed: u64) -> Result<BinaryMask> {
    if spec.count == 0 {
        return Err(Error::invalid("block count must be at least 1"));
    }
    if spec.shapes.is_empty() {
        return Err(Error::invalid("shape library is empty"));
    }
    if spec.min_side == 0 || spec.min_side > spec.max_side || spec.width == 0 || spec.height == 0 {
        return Err(Error::invalid(
            "block sides must satisfy 1 <= min_side <= max_side",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..spec.retries.max(1) {
        let mut mask = BinaryMask::empty(spec.width, spec.height);
        for _ in 0..spec.count {
            let shape = spec.shapes[rng.random_range(0..spec.shapes.len())];
            draw_block(&mut mask, shape, &mut rng, spec);
        }
        let report = connected_components(&mask, Connectivity::Eight);
        if report.count() <= spec.max_components && report.total_area <= spec.max_area {
            return Ok(mask);
        }
    }
    Err(Error::RetriesExhausted(spec.retries.max(1)))
}
