use std::path::Path;

use crate::dataio::ImageBuffer;
use crate::error::{Error, Result};

/// Dense `height × width × channels` array of reals, channel-interleaved and
/// row-major. Used both for patch textures and for their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Texture {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width}x{channels} texture needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Texture {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Texture {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Texture {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.height, self.width, self.channels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    pub(crate) fn same_shape(&self, other: &Texture, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// `self += w · other`.
    pub fn add_scaled(&mut self, other: &Texture, w: f64) -> Result<()> {
        self.same_shape(other, "add_scaled")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += w * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Texture) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn clamp_unit(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    /// Reads an 8-bit RGB image as values in `[0, 1]`.
    pub fn from_image(img: &ImageBuffer) -> Self {
        Texture {
            height: img.height(),
            width: img.width(),
            channels: ImageBuffer::CHANNELS,
            data: img.pixels().iter().map(|&v| v as f64 / 255.0).collect(),
        }
    }

    /// Scales by 255 and rounds; values outside `[0, 1]` are clamped.
    pub fn to_image(&self) -> Result<ImageBuffer> {
        if self.channels != ImageBuffer::CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "only 3-channel textures convert to RGB, got {}",
                self.channels
            )));
        }
        let pixels = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        ImageBuffer::new(self.width, self.height, pixels)
    }
}

/// Printable colors, each channel in `[0, 1]`.
pub type Palette = Vec<[f64; 3]>;

/// One hex RGB per line (`#RRGGBB` or `RRGGBB`); blank lines are skipped.
pub fn parse_palette(text: &str, origin: &Path) -> Result<Palette> {
    let mut palette = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let hex = line.strip_prefix('#').unwrap_or(line);
        let bad = || Error::parse(origin, idx + 1, format!("`{line}` is not a hex RGB color"));
        if hex.len() != 6 || !hex.is_ascii() {
            return Err(bad());
        }
        let mut rgb = [0.0; 3];
        for (c, slot) in rgb.iter_mut().enumerate() {
            let byte = u8::from_str_radix(&hex[2 * c..2 * c + 2], 16).map_err(|_| bad())?;
            *slot = byte as f64 / 255.0;
        }
        palette.push(rgb);
    }
    if palette.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(palette)
}

pub fn load_palette(path: impl AsRef<Path>) -> Result<Palette> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_palette(&text, path)
}
