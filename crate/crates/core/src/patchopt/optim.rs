use serde::{Deserialize, Serialize};

use super::texture::Texture;
use crate::error::Result;

/// Floor on `‖∇‖₁` in the momentum update.
pub const GRAD_L1_FLOOR: f64 = 1e-12;

/// A texture plus the optimizer buffers that evolve with it.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchState {
    pub texture: Texture,
    pub momentum: Texture,
    pub adam_m: Texture,
    pub adam_v: Texture,
    pub step: u64,
}

impl PatchState {
    /// Wraps `texture` (clamped to `[0, 1]`) with zeroed buffers.
    pub fn new(mut texture: Texture) -> Self {
        texture.clamp_unit();
        let zeros = texture.zeros_like();
        PatchState {
            momentum: zeros.clone(),
            adam_m: zeros.clone(),
            adam_v: zeros,
            texture,
            step: 0,
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `g ← μ·g + ∇/‖∇‖₁`, then `x ← clamp(x − η·sign(g))`.
pub fn momentum_step(
    state: &mut PatchState,
    grad: &Texture,
    mu: f64,
    step_size: f64,
) -> Result<()> {
    state.texture.same_shape(grad, "momentum_step")?;
    let l1 = grad.l1_norm().max(GRAD_L1_FLOOR);
    let x = state.texture.data_mut();
    for ((xi, gi), di) in x.iter_mut().zip(state.momentum.data_mut()).zip(grad.data()) {
        *gi = mu * *gi + di / l1;
        *xi = (*xi - step_size * sign(*gi)).clamp(0.0, 1.0);
    }
    state.step += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub lr: f64,
    #[serde(default = "AdamParams::default_beta1")]
    pub beta1: f64,
    #[serde(default = "AdamParams::default_beta2")]
    pub beta2: f64,
    #[serde(default = "AdamParams::default_eps")]
    pub eps: f64,
}

impl AdamParams {
    fn default_beta1() -> f64 {
        0.9
    }
    fn default_beta2() -> f64 {
        0.999
    }
    fn default_eps() -> f64 {
        1e-8
    }

    pub fn new(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: Self::default_beta1(),
            beta2: Self::default_beta2(),
            eps: Self::default_eps(),
        }
    }
}

/// Bias-corrected Adam followed by a clamp to `[0, 1]`.
pub fn adam_step(state: &mut PatchState, grad: &Texture, p: AdamParams) -> Result<()> {
    state.texture.same_shape(grad, "adam_step")?;
    let t = (state.step + 1) as i32;
    let c1 = 1.0 - p.beta1.powi(t);
    let c2 = 1.0 - p.beta2.powi(t);
    let x = state.texture.data_mut();
    let m = state.adam_m.data_mut();
    let v = state.adam_v.data_mut();
    for i in 0..x.len() {
        let g = grad.data()[i];
        m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g;
        v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        x[i] = (x[i] - p.lr * m_hat / (v_hat.sqrt() + p.eps)).clamp(0.0, 1.0);
    }
    state.step += 1;
    Ok(())
}
