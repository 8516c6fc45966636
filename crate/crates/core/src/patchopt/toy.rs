use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::geometry::{apply_patch, PinholeModel};
use super::losses::LossGrad;
use super::optimize::{Frame, FrameContext, LossProvider};
use super::texture::Texture;
use crate::error::{Error, Result};

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// A one-anchor stand-in detector: objectness is
/// `sigmoid(Σ_box w·x / √|box| + b)` with fixed Gaussian weights `w` over
/// the frame grid. Its loss is the objectness itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDetector {
    weights: Texture,
    bias: f64,
}

impl ToyDetector {
    pub fn random(height: usize, width: usize, seed: u64, bias: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = Texture::from_fn(height, width, 3, |_, _, _| rng.sample(StandardNormal));
        ToyDetector { weights, bias }
    }

    fn logit(&self, ctx: &FrameContext, input: &Texture) -> f64 {
        let b = ctx.bbox;
        let mut z = 0.0;
        for y in b.y..b.y + b.height {
            for x in b.x..b.x + b.width {
                for c in 0..3 {
                    z += self.weights.get(y, x, c) * input.get(y, x, c);
                }
            }
        }
        z / ((b.width * b.height * 3) as f64).sqrt() + self.bias
    }

    pub fn objectness(&self, ctx: &FrameContext, input: &Texture) -> f64 {
        sigmoid(self.logit(ctx, input))
    }

    /// Noise-free mean objectness over frames with `texture` pasted in.
    pub fn mean_objectness(&self, frames: &[Frame], texture: &Texture) -> Result<f64> {
        if frames.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut sum = 0.0;
        for (index, f) in frames.iter().enumerate() {
            let input = apply_patch(&f.image, texture, f.bbox)?;
            sum += self.objectness(
                &FrameContext {
                    index,
                    bbox: f.bbox,
                },
                &input,
            );
        }
        Ok(sum / frames.len() as f64)
    }
}

impl LossProvider for ToyDetector {
    fn loss(&self, ctx: &FrameContext, input: &Texture) -> Result<LossGrad> {
        if input.shape() != self.weights.shape() {
            return Err(Error::Provider(format!(
                "toy detector expects {:?} frames, got {:?}",
                self.weights.shape(),
                input.shape()
            )));
        }
        let o = self.objectness(ctx, input);
        let b = ctx.bbox;
        let scale = o * (1.0 - o) / ((b.width * b.height * 3) as f64).sqrt();
        let mut grad = input.zeros_like();
        for y in b.y..b.y + b.height {
            for x in b.x..b.x + b.width {
                for c in 0..3 {
                    grad.set(y, x, c, scale * self.weights.get(y, x, c));
                }
            }
        }
        Ok(LossGrad { value: o, grad })
    }
}

/// A synthetic approach sequence: random backgrounds, boxes growing per
/// the pinhole model, and a toy detector over the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySceneSpec {
    pub frame_width: usize,
    pub frame_height: usize,
    /// Frame indices sampled from the approach.
    pub frame_indices: Vec<usize>,
    pub pinhole: PinholeModel,
    pub seed: u64,
    /// Detector bias; the logit for a mid-grey patch is close to this.
    pub bias: f64,
}

impl Default for ToySceneSpec {
    fn default() -> Self {
        ToySceneSpec {
            frame_width: 64,
            frame_height: 64,
            frame_indices: (0..8).map(|i| 5 * i).collect(),
            pinhole: PinholeModel {
                n: 60,
                base_box: [20.0, 20.0, 44.0, 44.0],
            },
            seed: 7,
            bias: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyScene {
    pub frames: Vec<Frame>,
    pub detector: ToyDetector,
}

impl ToySceneSpec {
    pub fn build(&self) -> Result<ToyScene> {
        if self.frame_indices.is_empty() {
            return Err(Error::EmptySet);
        }
        if self.frame_width == 0 || self.frame_height == 0 {
            return Err(Error::invalid("frame size must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let frames = self
            .frame_indices
            .iter()
            .map(|&j| {
                let image = Texture::from_fn(self.frame_height, self.frame_width, 3, |_, _, _| {
                    rng.random::<f64>()
                });
                let bbox = self
                    .pinhole
                    .pixel_box(j, self.frame_width, self.frame_height)?;
                Ok(Frame { image, bbox })
            })
            .collect::<Result<Vec<_>>>()?;
        let detector = ToyDetector::random(
            self.frame_height,
            self.frame_width,
            self.seed.wrapping_add(1),
            self.bias,
        );
        Ok(ToyScene { frames, detector })
    }
}
