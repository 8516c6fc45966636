use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::{apply_patch, apply_patch_backward, PixelBox};
use super::losses::{ensemble_adv_loss, nps_loss, tv_loss, LossGrad, TvMode};
use super::optim::{adam_step, momentum_step, AdamParams, PatchState};
use super::texture::{Palette, Texture};
use crate::error::{Error, Result};

/// One training frame and where the patch lands in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: Texture,
    pub bbox: PixelBox,
}

/// What a provider learns about the frame it is scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameContext {
    pub index: usize,
    pub bbox: PixelBox,
}

/// A differentiable attack objective evaluated on a composited frame.
pub trait LossProvider: Sync {
    /// Loss value and its gradient with respect to every value of `input`.
    fn loss(&self, frame: &FrameContext, input: &Texture) -> Result<LossGrad>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    /// Scale of the adversarial term.
    pub alpha: f64,
    /// Scale of the total-variation term.
    #[serde(default)]
    pub beta: f64,
    /// Scale of the non-printability term.
    #[serde(default)]
    pub gamma: f64,
    /// Per-provider ensemble weights.
    #[serde(default = "LossWeights::single")]
    pub lambdas: Vec<f64>,
    /// Momentum decay.
    #[serde(default = "LossWeights::default_mu")]
    pub mu: f64,
    /// Step size, or learning rate for Adam.
    pub step_size: f64,
}

impl LossWeights {
    fn single() -> Vec<f64> {
        vec![1.0]
    }
    fn default_mu() -> f64 {
        1.0
    }

    pub fn new(alpha: f64, step_size: f64) -> Self {
        LossWeights {
            alpha,
            beta: 0.0,
            gamma: 0.0,
            lambdas: Self::single(),
            mu: Self::default_mu(),
            step_size,
        }
    }

    fn validate(&self, providers: usize) -> Result<()> {
        let scales = [self.alpha, self.beta, self.gamma, self.mu];
        if scales
            .iter()
            .chain(&self.lambdas)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::invalid(
                "loss weights must be finite and non-negative",
            ));
        }
        if self.alpha + self.beta + self.gamma <= 0.0 {
            return Err(Error::invalid(
                "at least one of alpha, beta, gamma must be positive",
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step_size must be positive"));
        }
        if self.lambdas.len() != providers {
            return Err(Error::invalid(format!(
                "{} ensemble weights for {providers} loss providers",
                self.lambdas.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", deny_unknown_fields)]
pub enum OptimizerKind {
    /// Normalized-gradient momentum with sign steps.
    #[default]
    Momentum,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

/// Default amplitude of the uniform input noise.
pub const DEFAULT_NOISE: f64 = 2.0 / 255.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSettings {
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub weights: LossWeights,
    #[serde(default)]
    pub tv_mode: TvMode,
    /// Uniform noise in `[-η, η]` added to each composited frame.
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Frames per optimizer step; all frames when absent.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Random box rescaling range applied per frame and iteration.
    #[serde(default)]
    pub scale_jitter: Option<[f64; 2]>,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE
}

impl OptimizeSettings {
    pub fn new(iterations: usize, weights: LossWeights) -> Self {
        OptimizeSettings {
            iterations,
            seed: 0,
            optimizer: OptimizerKind::default(),
            weights,
            tv_mode: TvMode::default(),
            noise: DEFAULT_NOISE,
            batch_size: None,
            scale_jitter: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise amplitude must be non-negative"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if let Some([lo, hi]) = self.scale_jitter {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::invalid("scale_jitter must satisfy 0 < lo <= hi"));
            }
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1)
                || !(0.0..1.0).contains(&beta2)
                || eps.is_nan()
                || eps <= 0.0
            {
                return Err(Error::invalid("Adam needs betas in [0, 1) and eps > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub state: PatchState,
    /// Mean objective per iteration, measured before each update.
    pub trace: Vec<f64>,
}

fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Expected attack loss over frames plus weighted TV and NPS terms,
/// minimized with the chosen optimizer. Frames in a batch are scored in
/// parallel and their gradients summed in a fixed order.
pub fn optimize_patch(
    frames: &[Frame],
    providers: &[&dyn LossProvider],
    initial: Texture,
    palette: Option<&Palette>,
    settings: &OptimizeSettings,
) -> Result<OptimizeOutcome> {
    settings.validate()?;
    settings.weights.validate(providers.len())?;
    if frames.is_empty() {
        return Err(Error::EmptySet);
    }
    if settings.weights.gamma > 0.0 && palette.is_none() {
        return Err(Error::invalid("gamma > 0 needs a palette"));
    }
    for (i, f) in frames.iter().enumerate() {
        if !f.bbox.fits(&f.image) || f.image.channels() != initial.channels() {
            return Err(Error::ShapeMismatch(format!(
                "frame {i} cannot hold the patch"
            )));
        }
    }

    let w = &settings.weights;
    let tex_shape = (initial.height(), initial.width());
    let mut state = PatchState::new(initial);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let noise_seed = settings.seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let batch = settings
        .batch_size
        .unwrap_or(frames.len())
        .min(frames.len());
    let mut trace = Vec::with_capacity(settings.iterations);

    for iter in 0..settings.iterations {
        order.shuffle(&mut rng);
        let mut iter_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch) {
            let jobs: Vec<(usize, PixelBox)> = chunk
                .iter()
                .map(|&i| {
                    let f = &frames[i];
                    let bbox = match settings.scale_jitter {
                        Some([lo, hi]) => {
                            let s = if lo < hi {
                                rng.random_range(lo..=hi)
                            } else {
                                lo
                            };
                            f.bbox.scaled(s, f.image.width(), f.image.height())
                        }
                        None => f.bbox,
                    };
                    (i, bbox)
                })
                .collect();
            let texture = &state.texture;
            let per_frame: Vec<LossGrad> = jobs
                .par_iter()
                .map(|&(i, bbox)| {
                    let mut input = apply_patch(&frames[i].image, texture, bbox)?;
                    if settings.noise > 0.0 {
                        let mut nr = noise_rng(noise_seed, (iter * frames.len() + i) as u64);
                        for v in input.data_mut() {
                            *v += nr.random_range(-settings.noise..=settings.noise);
                        }
                    }
                    let ctx = FrameContext { index: i, bbox };
                    let parts = providers
                        .iter()
                        .map(|p| p.loss(&ctx, &input))
                        .collect::<Result<Vec<_>>>()?;
                    let adv = ensemble_adv_loss(&parts, &w.lambdas)?;
                    Ok(LossGrad {
                        value: adv.value,
                        grad: apply_patch_backward(&adv.grad, tex_shape, bbox)?,
                    })
                })
                .collect::<Result<_>>()?;

            let n = per_frame.len() as f64;
            let mut total = LossGrad {
                value: 0.0,
                grad: state.texture.zeros_like(),
            };
            for lg in &per_frame {
                total.value += w.alpha * lg.value / n;
                total.grad.add_scaled(&lg.grad, w.alpha / n)?;
            }
            if w.beta > 0.0 {
                let tv = tv_loss(&state.texture, settings.tv_mode)?;
                total.value += w.beta * tv.value;
                total.grad.add_scaled(&tv.grad, w.beta)?;
            }
            if let (true, Some(pal)) = (w.gamma > 0.0, palette) {
                let nps = nps_loss(&state.texture, pal)?;
                total.value += w.gamma * nps.value;
                total.grad.add_scaled(&nps.grad, w.gamma)?;
            }
            if !total.value.is_finite() {
                return Err(Error::Provider(format!(
                    "non-finite loss at iteration {iter}"
                )));
            }
            iter_loss += total.value;
            batches += 1;

            match settings.optimizer {
                OptimizerKind::Momentum => {
                    momentum_step(&mut state, &total.grad, w.mu, w.step_size)?
                }
                OptimizerKind::Adam { beta1, beta2, eps } => adam_step(
                    &mut state,
                    &total.grad,
                    AdamParams {
                        lr: w.step_size,
                        beta1,
                        beta2,
                        eps,
                    },
                )?,
            }
        }
        trace.push(iter_loss / batches as f64);
    }
    Ok(OptimizeOutcome { state, trace })
}
