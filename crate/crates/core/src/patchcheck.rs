//! Perturbation masks and connected-domain limits on submitted patches.

use serde::Serialize;

use crate::dataio::ImageBuffer;
use crate::error::{Error, Result};

/// Face crops are this many pixels on each side.
pub const FACE_SIZE: usize = 112;
/// At most this many connected perturbed regions.
pub const FACE_MAX_COMPONENTS: usize = 5;
/// 10% of 112×112, truncated.
pub const FACE_MAX_AREA: usize = 1254;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    /// Diagonal neighbors join regions too.
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::invalid(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

/// Inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Component {
    pub pixel_count: usize,
    pub bounding_box: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentReport {
    /// Ordered by each component's first pixel in raster order.
    pub components: Vec<Component>,
    pub total_area: usize,
    pub valid: bool,
}

impl ComponentReport {
    pub fn count(&self) -> usize {
        self.components.len()
    }
}

/// Marks every pixel where any channel differs.
pub fn extract_perturbation(adv: &ImageBuffer, orig: &ImageBuffer) -> Result<BinaryMask> {
    if adv.width() != orig.width() || adv.height() != orig.height() {
        return Err(Error::ShapeMismatch(format!(
            "adversarial image is {}x{}, original is {}x{}",
            adv.width(),
            adv.height(),
            orig.width(),
            orig.height()
        )));
    }
    let bits = adv
        .pixels()
        .chunks_exact(ImageBuffer::CHANNELS)
        .zip(orig.pixels().chunks_exact(ImageBuffer::CHANNELS))
        .map(|(a, o)| a != o)
        .collect();
    BinaryMask::new(adv.width(), adv.height(), bits)
}

/// Marks every pixel with a nonzero channel.
pub fn region_mask(image: &ImageBuffer) -> BinaryMask {
    let bits = image
        .pixels()
        .chunks_exact(ImageBuffer::CHANNELS)
        .map(|p| p.iter().any(|&c| c != 0))
        .collect();
    BinaryMask {
        width: image.width(),
        height: image.height(),
        bits,
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // Keep the raster-earlier pixel as root.
        if ra < rb {
            self.parent[rb] = ra;
        } else if rb < ra {
            self.parent[ra] = rb;
        }
    }
}

/// Two-pass union-find labeling. `valid` is always true here; the
/// validators set it.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentReport {
    let (w, h) = (mask.width, mask.height);
    let mut ds = DisjointSet {
        parent: (0..w * h).collect(),
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask.bits[i] {
                continue;
            }
            if x > 0 && mask.bits[i - 1] {
                ds.union(i, i - 1);
            }
            if y > 0 {
                let up = i - w;
                if mask.bits[up] {
                    ds.union(i, up);
                }
                if connectivity == Connectivity::Eight {
                    if x > 0 && mask.bits[up - 1] {
                        ds.union(i, up - 1);
                    }
                    if x + 1 < w && mask.bits[up + 1] {
                        ds.union(i, up + 1);
                    }
                }
            }
        }
    }

    let mut slot_of_root = vec![usize::MAX; w * h];
    let mut components: Vec<Component> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask.bits[i] {
                continue;
            }
            let root = ds.find(i);
            if slot_of_root[root] == usize::MAX {
                slot_of_root[root] = components.len();
                components.push(Component {
                    pixel_count: 0,
                    bounding_box: BoundingBox {
                        x_min: x,
                        y_min: y,
                        x_max: x,
                        y_max: y,
                    },
                });
            }
            let c = &mut components[slot_of_root[root]];
            c.pixel_count += 1;
            let b = &mut c.bounding_box;
            b.x_min = b.x_min.min(x);
            b.x_max = b.x_max.max(x);
            b.y_max = b.y_max.max(y);
        }
    }
    let total_area = components.iter().map(|c| c.pixel_count).sum();
    ComponentReport {
        components,
        total_area,
        valid: true,
    }
}

/// Checks the face-track limits on the difference between two 112×112 crops.
pub fn validate_face_patch(
    adv: &ImageBuffer,
    orig: &ImageBuffer,
    connectivity: Connectivity,
) -> Result<ComponentReport> {
    for (name, img) in [("adversarial", adv), ("original", orig)] {
        if img.width() != FACE_SIZE || img.height() != FACE_SIZE {
            return Err(Error::ShapeMismatch(format!(
                "{name} image is {}x{}, expected {FACE_SIZE}x{FACE_SIZE}",
                img.width(),
                img.height()
            )));
        }
    }
    let mut report = connected_components(&extract_perturbation(adv, orig)?, connectivity);
    report.valid = report.count() <= FACE_MAX_COMPONENTS && report.total_area <= FACE_MAX_AREA;
    Ok(report)
}
