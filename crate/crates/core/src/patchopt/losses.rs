use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::texture::{Palette, Texture};
use crate::error::{Error, Result};

/// A loss value with its gradient with respect to the texture.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Texture,
}

/// Smoothing inside the square root of the TV term.
pub const TV_EPS: f64 = 1e-8;
/// Floor on class probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvMode {
    /// `Σ √(Δv² + Δh² + ε)`.
    #[default]
    Sqrt,
    /// `Σ (Δv² + Δh²)`.
    Squared,
}

/// Total variation, per channel, with missing neighbors contributing a zero
/// difference.
pub fn tv_loss(patch: &Texture, mode: TvMode) -> Result<LossGrad> {
    let (h, w, ch) = patch.shape();
    if h < 2 || w < 2 {
        return Err(Error::invalid(format!(
            "TV needs at least 2x2, got {h}x{w}"
        )));
    }
    let mut grad = patch.zeros_like();
    let mut value = 0.0;
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let p = patch.get(y, x, c);
                let dv = if y + 1 < h {
                    p - patch.get(y + 1, x, c)
                } else {
                    0.0
                };
                let dh = if x + 1 < w {
                    p - patch.get(y, x + 1, c)
                } else {
                    0.0
                };
                // Partial derivatives of the term w.r.t. dv and dh.
                let (gv, gh) = match mode {
                    TvMode::Sqrt => {
                        let t = (dv * dv + dh * dh + TV_EPS).sqrt();
                        value += t;
                        (dv / t, dh / t)
                    }
                    TvMode::Squared => {
                        value += dv * dv + dh * dh;
                        (2.0 * dv, 2.0 * dh)
                    }
                };
                let i = patch.index(y, x, c);
                grad.data_mut()[i] += gv + gh;
                if y + 1 < h {
                    let j = patch.index(y + 1, x, c);
                    grad.data_mut()[j] -= gv;
                }
                if x + 1 < w {
                    let j = patch.index(y, x + 1, c);
                    grad.data_mut()[j] -= gh;
                }
            }
        }
    }
    Ok(LossGrad { value, grad })
}

/// Sum over pixels of the Euclidean distance to the nearest palette color.
/// Ties go to the lowest palette index; an exact match has zero gradient.
pub fn nps_loss(patch: &Texture, palette: &Palette) -> Result<LossGrad> {
    if palette.is_empty() {
        return Err(Error::EmptySet);
    }
    if patch.channels() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "NPS needs an RGB texture, got {} channels",
            patch.channels()
        )));
    }
    let mut grad = patch.zeros_like();
    let mut value = 0.0;
    for (px, g) in patch
        .data()
        .chunks_exact(3)
        .zip(grad.data_mut().chunks_exact_mut(3))
    {
        let mut best = (f64::INFINITY, 0usize);
        for (k, color) in palette.iter().enumerate() {
            let d2: f64 = px.iter().zip(color).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.0 {
                best = (d2, k);
            }
        }
        let d = best.0.sqrt();
        value += d;
        if d > 0.0 {
            let color = &palette[best.1];
            for c in 0..3 {
                g[c] = (px[c] - color[c]) / d;
            }
        }
    }
    Ok(LossGrad { value, grad })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub objectness: f64,
    pub class_scores: Vec<f64>,
}

/// Detector outputs plus the suppression target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub anchors: Vec<Anchor>,
    pub class_names: Vec<String>,
    /// Class indices whose detections the attack suppresses.
    pub suppress: BTreeSet<usize>,
    /// Only anchors with objectness above this count; 0 keeps all.
    #[serde(default)]
    pub obj_threshold: f64,
}

impl AnchorSet {
    fn argmax(scores: &[f64]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &s) in scores.iter().enumerate() {
            if best.is_none_or(|b| s > scores[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// Anchors whose top class is suppressed and which pass the threshold.
    pub fn selected(&self) -> Vec<usize> {
        self.anchors
            .iter()
            .enumerate()
            .filter(|(_, a)| {
                let top = Self::argmax(&a.class_scores);
                top.is_some_and(|t| self.suppress.contains(&t))
                    && (self.obj_threshold <= 0.0 || a.objectness > self.obj_threshold)
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }

    fn validate(&self) -> Result<()> {
        for (i, a) in self.anchors.iter().enumerate() {
            if a.class_scores.len() != self.class_names.len() {
                return Err(Error::ShapeMismatch(format!(
                    "anchor {i} has {} class scores for {} classes",
                    a.class_scores.len(),
                    self.class_names.len()
                )));
            }
            if !a.objectness.is_finite() || a.class_scores.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFinite(format!("anchor {i}")));
            }
        }
        Ok(())
    }
}

/// Value and gradient of an anchor loss with respect to the detector outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorLoss {
    pub value: f64,
    /// `∂L/∂objectness` per anchor.
    pub grad_objectness: Vec<f64>,
    /// `∂L/∂class_scores` per anchor.
    pub grad_classes: Vec<Vec<f64>>,
}

impl AnchorLoss {
    fn zeros(set: &AnchorSet) -> Self {
        AnchorLoss {
            value: 0.0,
            grad_objectness: vec![0.0; set.anchors.len()],
            grad_classes: set
                .anchors
                .iter()
                .map(|a| vec![0.0; a.class_scores.len()])
                .collect(),
        }
    }
}

/// Sum of objectness over the selected anchors.
pub fn obj_loss(set: &AnchorSet) -> Result<AnchorLoss> {
    set.validate()?;
    let mut out = AnchorLoss::zeros(set);
    for i in set.selected() {
        out.value += set.anchors[i].objectness;
        out.grad_objectness[i] = 1.0;
    }
    Ok(out)
}

/// Mean cross-entropy towards class `target` over the selected anchors.
pub fn targeted_cls_loss(set: &AnchorSet, target: usize) -> Result<AnchorLoss> {
    set.validate()?;
    if target >= set.class_names.len() {
        return Err(Error::OutOfRange(format!(
            "target class {target} with {} classes",
            set.class_names.len()
        )));
    }
    for (i, a) in set.anchors.iter().enumerate() {
        let sum: f64 = a.class_scores.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || a.class_scores.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid(format!(
                "anchor {i} class scores are not a probability vector (sum {sum})"
            )));
        }
    }
    let mut out = AnchorLoss::zeros(set);
    let sel = set.selected();
    if sel.is_empty() {
        return Ok(out);
    }
    let m = sel.len() as f64;
    for i in sel {
        let p = set.anchors[i].class_scores[target];
        if p > PROB_FLOOR {
            out.value -= p.ln() / m;
            out.grad_classes[i][target] = -1.0 / (m * p);
        } else {
            out.value -= PROB_FLOOR.ln() / m;
        }
    }
    Ok(out)
}

/// `Σ wᵢ·partᵢ` for values and gradients alike.
pub fn combine_loss(parts: &[LossGrad], weights: &[f64]) -> Result<LossGrad> {
    if parts.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} loss parts but {} weights",
            parts.len(),
            weights.len()
        )));
    }
    let first = parts.first().ok_or(Error::EmptySet)?;
    let mut out = LossGrad {
        value: 0.0,
        grad: first.grad.zeros_like(),
    };
    for (part, &w) in parts.iter().zip(weights) {
        out.value += w * part.value;
        out.grad.add_scaled(&part.grad, w)?;
    }
    Ok(out)
}

/// Weighted sum of per-model adversarial losses.
pub fn ensemble_adv_loss(model_losses: &[LossGrad], lambdas: &[f64]) -> Result<LossGrad> {
    combine_loss(model_losses, lambdas)
}
