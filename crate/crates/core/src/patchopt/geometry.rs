use serde::{Deserialize, Serialize};

use super::texture::Texture;
use crate::error::{Error, Result};
use crate::patchcheck::BinaryMask;

/// `M ⊙ patch + (1 − M) ⊙ frame`, with `patch` already laid out on the
/// frame's canvas.
pub fn composite(frame: &Texture, mask: &BinaryMask, patch: &Texture) -> Result<Texture> {
    frame.same_shape(patch, "composite frame vs patch")?;
    if mask.width() != frame.width() || mask.height() != frame.height() {
        return Err(Error::ShapeMismatch(format!(
            "mask is {}x{}, frame is {}x{}",
            mask.width(),
            mask.height(),
            frame.width(),
            frame.height()
        )));
    }
    let ch = frame.channels();
    let mut out = frame.clone();
    for (p, &on) in mask.bits().iter().enumerate() {
        if on {
            let r = p * ch..(p + 1) * ch;
            out.data_mut()[r.clone()].copy_from_slice(&patch.data()[r]);
        }
    }
    Ok(out)
}

/// Axis-aligned integer box inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelBox {
    pub fn fits(&self, frame: &Texture) -> bool {
        self.width >= 1
            && self.height >= 1
            && self.x + self.width <= frame.width()
            && self.y + self.height <= frame.height()
    }

    pub fn mask(&self, width: usize, height: usize) -> BinaryMask {
        let mut m = BinaryMask::empty(width, height);
        for y in self.y..(self.y + self.height).min(height) {
            for x in self.x..(self.x + self.width).min(width) {
                m.set(x, y, true);
            }
        }
        m
    }

    /// The box scaled about its center, shifted and shrunk to stay inside
    /// a `width × height` frame.
    pub fn scaled(&self, factor: f64, width: usize, height: usize) -> PixelBox {
        let w = ((self.width as f64 * factor).round() as usize).clamp(1, width);
        let h = ((self.height as f64 * factor).round() as usize).clamp(1, height);
        let cx = self.x as f64 + self.width as f64 / 2.0;
        let cy = self.y as f64 + self.height as f64 / 2.0;
        let x = (cx - w as f64 / 2.0).round().clamp(0.0, (width - w) as f64) as usize;
        let y = (cy - h as f64 / 2.0)
            .round()
            .clamp(0.0, (height - h) as f64) as usize;
        PixelBox {
            x,
            y,
            width: w,
            height: h,
        }
    }
}

/// Resizes `texture` to the box and pastes it into `frame`.
pub fn apply_patch(frame: &Texture, texture: &Texture, bbox: PixelBox) -> Result<Texture> {
    if !bbox.fits(frame) {
        return Err(Error::ShapeMismatch(format!(
            "box {bbox:?} does not fit a {}x{} frame",
            frame.width(),
            frame.height()
        )));
    }
    if texture.channels() != frame.channels() {
        return Err(Error::ShapeMismatch(
            "patch and frame channel counts differ".into(),
        ));
    }
    let resized = resize_bilinear(texture, bbox.height, bbox.width)?;
    let mut out = frame.clone();
    for y in 0..bbox.height {
        for x in 0..bbox.width {
            for c in 0..frame.channels() {
                out.set(bbox.y + y, bbox.x + x, c, resized.get(y, x, c));
            }
        }
    }
    Ok(out)
}

/// Pulls a gradient on the composited frame back to the texture.
pub fn apply_patch_backward(
    grad_frame: &Texture,
    texture_shape: (usize, usize),
    bbox: PixelBox,
) -> Result<Texture> {
    if !bbox.fits(grad_frame) {
        return Err(Error::ShapeMismatch(format!(
            "box {bbox:?} does not fit the gradient"
        )));
    }
    let crop = Texture::from_fn(bbox.height, bbox.width, grad_frame.channels(), |y, x, c| {
        grad_frame.get(bbox.y + y, bbox.x + x, c)
    });
    resize_bilinear_backward(&crop, texture_shape.0, texture_shape.1)
}

/// Constant-speed approach towards a camera that the object reaches at
/// frame `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinholeModel {
    pub n: usize,
    /// `(x1, y1, x2, y2)` in frame 0.
    pub base_box: [f64; 4],
}

/// Apparent-size ratio `h_i / h_j = (N − j)/(N − i)` between frames.
pub fn zoom_factor(model: &PinholeModel, i: usize, j: usize) -> Result<f64> {
    if i >= model.n || j >= model.n {
        return Err(Error::OutOfRange(format!(
            "frames {i} and {j} must be before the vanishing frame {}",
            model.n
        )));
    }
    Ok((model.n - j) as f64 / (model.n - i) as f64)
}

impl PinholeModel {
    /// The frame-0 box scaled about its center to frame `j`.
    pub fn box_at(&self, j: usize) -> Result<[f64; 4]> {
        let s = 1.0 / zoom_factor(self, 0, j)?;
        let [x1, y1, x2, y2] = self.base_box;
        let (cx, cy) = ((x1 + x2) / 2.0, (y1 + y2) / 2.0);
        let (hw, hh) = ((x2 - x1) / 2.0 * s, (y2 - y1) / 2.0 * s);
        Ok([cx - hw, cy - hh, cx + hw, cy + hh])
    }

    /// `box_at` rounded to whole pixels and kept inside the frame.
    pub fn pixel_box(&self, j: usize, width: usize, height: usize) -> Result<PixelBox> {
        let [x1, y1, x2, y2] = self.box_at(j)?;
        let x = x1.round().clamp(0.0, width.saturating_sub(1) as f64) as usize;
        let y = y1.round().clamp(0.0, height.saturating_sub(1) as f64) as usize;
        let w = ((x2.round() as i64 - x as i64).max(1) as usize).min(width - x);
        let h = ((y2.round() as i64 - y as i64).max(1) as usize).min(height - y);
        Ok(PixelBox {
            x,
            y,
            width: w,
            height: h,
        })
    }
}

/// Source coordinate and interpolation weight for each output index under
/// the align-corners convention.
fn sample_positions(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    (0..output)
        .map(|o| {
            let src = if output == 1 {
                0.0
            } else {
                o as f64 * (input - 1) as f64 / (output - 1) as f64
            };
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Bilinear resize with corners aligned; same size returns an exact copy.
pub fn resize_bilinear(texture: &Texture, height: usize, width: usize) -> Result<Texture> {
    let (ih, iw, ch) = texture.shape();
    if height == 0 || width == 0 || ih == 0 || iw == 0 {
        return Err(Error::invalid(
            "resize target and source must be at least 1x1",
        ));
    }
    if (ih, iw) == (height, width) {
        return Ok(texture.clone());
    }
    let ys = sample_positions(ih, height);
    let xs = sample_positions(iw, width);
    let mut out = Texture::zeros(height, width, ch);
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..ch {
                let top = texture.get(y0, x0, c) * (1.0 - fx) + texture.get(y0, x1, c) * fx;
                let bot = texture.get(y1, x0, c) * (1.0 - fx) + texture.get(y1, x1, c) * fx;
                out.set(oy, ox, c, top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Ok(out)
}

/// Resizes by a scale factor; the target side is `round(side·scale)`, at least 1.
pub fn resize_scale(texture: &Texture, scale: f64) -> Result<Texture> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let h = ((texture.height() as f64 * scale).round() as usize).max(1);
    let w = ((texture.width() as f64 * scale).round() as usize).max(1);
    resize_bilinear(texture, h, w)
}

/// Adjoint of [`resize_bilinear`]: maps an output gradient to the input grid.
pub fn resize_bilinear_backward(
    grad_out: &Texture,
    height: usize,
    width: usize,
) -> Result<Texture> {
    let (oh, ow, ch) = grad_out.shape();
    if height == 0 || width == 0 || oh == 0 || ow == 0 {
        return Err(Error::invalid(
            "resize target and source must be at least 1x1",
        ));
    }
    if (oh, ow) == (height, width) {
        return Ok(grad_out.clone());
    }
    let ys = sample_positions(height, oh);
    let xs = sample_positions(width, ow);
    let mut g = Texture::zeros(height, width, ch);
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..ch {
                let v = grad_out.get(oy, ox, c);
                let d = g.data_mut();
                let w = width;
                let at = |y: usize, x: usize| (y * w + x) * ch + c;
                d[at(y0, x0)] += v * (1.0 - fy) * (1.0 - fx);
                d[at(y0, x1)] += v * (1.0 - fy) * fx;
                d[at(y1, x0)] += v * fy * (1.0 - fx);
                d[at(y1, x1)] += v * fy * fx;
            }
        }
    }
    Ok(g)
}

pub type Homography = [[f64; 3]; 3];

fn invert(h: &Homography) -> Result<Homography> {
    let m = h;
    let cof =
        |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let det = m[0][0] * adj[0][0] + m[0][1] * adj[1][0] + m[0][2] * adj[2][0];
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if !det.is_finite() || det.abs() <= 1e-12 * scale.powi(3).max(f64::MIN_POSITIVE) {
        return Err(Error::SingularMatrix);
    }
    Ok(adj.map(|row| row.map(|v| v / det)))
}

/// Warps with a homography mapping source pixels `(x, y, 1)` to destination
/// pixels. Each destination pixel is inverse-mapped and bilinearly sampled;
/// samples outside the source are 0.
pub fn perspective_warp(texture: &Texture, homography: &Homography) -> Result<Texture> {
    let inv = invert(homography)?;
    let (h, w, ch) = texture.shape();
    let mut out = Texture::zeros(h, w, ch);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let z = inv[2][0] * xf + inv[2][1] * yf + inv[2][2];
            if z.abs() < 1e-15 {
                continue;
            }
            let sx = (inv[0][0] * xf + inv[0][1] * yf + inv[0][2]) / z;
            let sy = (inv[1][0] * xf + inv[1][1] * yf + inv[1][2]) / z;
            // A small tolerance keeps exact edge hits from rounding out.
            let tol = 1e-9;
            if !(sx >= -tol
                && sy >= -tol
                && sx <= (w - 1) as f64 + tol
                && sy <= (h - 1) as f64 + tol)
            {
                continue;
            }
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let sy = sy.clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for c in 0..ch {
                let top = texture.get(y0, x0, c) * (1.0 - fx) + texture.get(y0, x1, c) * fx;
                let bot = texture.get(y1, x0, c) * (1.0 - fx) + texture.get(y1, x1, c) * fx;
                out.set(y, x, c, top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Ok(out)
}

/// Normalized Gaussian weights on `[-r, r]` with `r = ⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian blur with clamped edges; `σ = 0` is the identity.
pub fn gaussian_smooth(texture: &Texture, sigma: f64) -> Result<Texture> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::invalid(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(texture.clone());
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (h, w, ch) = texture.shape();
    let clampi = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let horizontal = Texture::from_fn(h, w, ch, |y, x, c| {
        k.iter()
            .enumerate()
            .map(|(t, kw)| kw * texture.get(y, clampi(x as i64 + t as i64 - r, w), c))
            .sum()
    });
    Ok(Texture::from_fn(h, w, ch, |y, x, c| {
        k.iter()
            .enumerate()
            .map(|(t, kw)| kw * horizontal.get(clampi(y as i64 + t as i64 - r, h), x, c))
            .sum()
    }))
}
