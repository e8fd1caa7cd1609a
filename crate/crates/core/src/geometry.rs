//! Box arithmetic, anchor grids and regression-delta encoding.
//!
//! Arithmetic works on center form `(cx, cy, w, h)`. Files use corner form
//! `(x1, y1, x2, y2)`. A [`BBox`] keeps its corners as the canonical values and
//! derives the center form from them, so writing a box and reading it back
//! gives bit-identical values.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Regression offsets `(dx, dy, dw, dh)` of a target box relative to an anchor.
pub type Delta4 = [f64; 4];

/// Axis-aligned box. Width and height are always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    corners: [f64; 4],
}

impl BBox {
    /// Box with the given center and size. The stored center and size are
    /// re-derived from the corners and may differ from the inputs in the last bit.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite box ({cx}, {cy}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "non-positive extent w={w}, h={h}"
            )));
        }
        let (hw, hh) = (w * 0.5, h * 0.5);
        Self::from_corners(cx - hw, cy - hh, cx + hw, cy + hh)
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite corners ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        let (w, h) = (x2 - x1, y2 - y1);
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::InvalidBox(format!(
                "non-positive extent w={w}, h={h}"
            )));
        }
        Ok(Self {
            cx: (x1 + x2) * 0.5,
            cy: (y1 + y2) * 0.5,
            w,
            h,
            corners: [x1, y1, x2, y2],
        })
    }

    #[inline]
    pub fn cx(&self) -> f64 {
        self.cx
    }

    #[inline]
    pub fn cy(&self) -> f64 {
        self.cy
    }

    #[inline]
    pub fn w(&self) -> f64 {
        self.w
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// `[x1, y1, x2, y2]`.
    #[inline]
    pub fn corners(&self) -> [f64; 4] {
        self.corners
    }

    /// Area of the overlap with `other`, zero when disjoint or merely touching.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let [ax1, ay1, ax2, ay2] = self.corners();
        let [bx1, by1, bx2, by2] = other.corners();
        let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
        let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
        iw * ih
    }

    /// Returns the part of this box inside `[0, width] x [0, height]`.
    pub fn clip(&self, width: f64, height: f64) -> Result<BBox> {
        let [x1, y1, x2, y2] = self.corners();
        BBox::from_corners(
            x1.clamp(0.0, width),
            y1.clamp(0.0, height),
            x2.clamp(0.0, width),
            y2.clamp(0.0, height),
        )
    }

    /// True if `other` lies entirely within this box.
    pub fn contains(&self, other: &BBox) -> bool {
        let [ax1, ay1, ax2, ay2] = self.corners();
        let [bx1, by1, bx2, by2] = other.corners();
        ax1 <= bx1 && ay1 <= by1 && ax2 >= bx2 && ay2 >= by2
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.corners().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[f64; 4]>::deserialize(deserializer)?;
        BBox::from_corners(x1, y1, x2, y2).map_err(serde::de::Error::custom)
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Fraction of `b` covered by `a`: `area(a ∩ b) / area(b)`. Not symmetric.
pub fn coverage(a: &BBox, b: &BBox) -> f64 {
    a.intersection_area(b) / b.area()
}

/// Smallest box that contains both inputs.
pub fn union_box(h: &BBox, o: &BBox) -> BBox {
    let [hx1, hy1, hx2, hy2] = h.corners();
    let [ox1, oy1, ox2, oy2] = o.corners();
    BBox::from_corners(hx1.min(ox1), hy1.min(oy1), hx2.max(ox2), hy2.max(oy2))
        .expect("union of two valid boxes is valid")
}

/// Offsets of `target` relative to `anchor`: center shift scaled by anchor size,
/// log size ratio.
pub fn encode_deltas(anchor: &BBox, target: &BBox) -> Delta4 {
    [
        (target.cx - anchor.cx) / anchor.w,
        (target.cy - anchor.cy) / anchor.h,
        (target.w / anchor.w).ln(),
        (target.h / anchor.h).ln(),
    ]
}

/// Inverse of [`encode_deltas`].
pub fn decode_deltas(anchor: &BBox, deltas: &Delta4) -> Result<BBox> {
    if deltas.iter().any(|d| !d.is_finite()) {
        return Err(Error::Numeric(format!("non-finite deltas {deltas:?}")));
    }
    let [dx, dy, dw, dh] = *deltas;
    BBox::new(
        anchor.cx + dx * anchor.w,
        anchor.cy + dy * anchor.h,
        anchor.w * dw.exp(),
        anchor.h * dh.exp(),
    )
    .map_err(|e| Error::Numeric(format!("decoded box is unusable: {e}")))
}

/// One pyramid level of the anchor grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub stride: f64,
    pub base_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    pub image_width: f64,
    pub image_height: f64,
    pub levels: Vec<LevelSpec>,
    pub scales: Vec<f64>,
    /// Height over width.
    pub aspect_ratios: Vec<f64>,
    /// Clip anchors to the image. Off by default.
    #[serde(default)]
    pub clip: bool,
}

impl Default for AnchorConfig {
    /// Five levels (strides 8..128, base size 4x stride), three octave scales and
    /// three aspect ratios on a 512x512 image.
    fn default() -> Self {
        Self {
            image_width: 512.0,
            image_height: 512.0,
            levels: [8.0, 16.0, 32.0, 64.0, 128.0]
                .iter()
                .map(|&stride| LevelSpec {
                    stride,
                    base_size: 4.0 * stride,
                })
                .collect(),
            scales: vec![1.0, 2f64.powf(1.0 / 3.0), 2f64.powf(2.0 / 3.0)],
            aspect_ratios: vec![0.5, 1.0, 2.0],
            clip: false,
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("anchor config has no pyramid levels".into()));
        }
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return Err(Error::Config(format!(
                "image size must be positive, got {}x{}",
                self.image_width, self.image_height
            )));
        }
        for pair in self.levels.windows(2) {
            if pair[1].stride <= pair[0].stride {
                return Err(Error::Config("anchor strides must be strictly increasing".into()));
            }
        }
        if self
            .levels
            .iter()
            .any(|l| !(l.stride > 0.0 && l.base_size > 0.0))
        {
            return Err(Error::Config("strides and base sizes must be positive".into()));
        }
        if self.scales.is_empty() || self.aspect_ratios.is_empty() {
            return Err(Error::Config("scales and aspect ratios must be non-empty".into()));
        }
        if self
            .scales
            .iter()
            .chain(&self.aspect_ratios)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::Config("scales and aspect ratios must be positive".into()));
        }
        Ok(())
    }

    /// Cells per level as `(rows, cols)`.
    pub fn grid_shape(&self, level: usize) -> (usize, usize) {
        let stride = self.levels[level].stride;
        (
            (self.image_height / stride).ceil() as usize,
            (self.image_width / stride).ceil() as usize,
        )
    }

    /// Number of anchors [`generate_anchors`] produces.
    pub fn anchor_count(&self) -> usize {
        let per_cell = self.scales.len() * self.aspect_ratios.len();
        (0..self.levels.len())
            .map(|l| {
                let (rows, cols) = self.grid_shape(l);
                rows * cols * per_cell
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub level: usize,
    pub index: usize,
}

/// Lays out anchors level by level, then row, column, scale and ratio.
/// Indices are assigned in exactly that order.
pub fn generate_anchors(cfg: &AnchorConfig) -> Result<Vec<Anchor>> {
    cfg.validate()?;
    let mut anchors = Vec::with_capacity(cfg.anchor_count());
    for (level, spec) in cfg.levels.iter().enumerate() {
        let (rows, cols) = cfg.grid_shape(level);
        for row in 0..rows {
            let cy = spec.stride * (row as f64 + 0.5);
            for col in 0..cols {
                let cx = spec.stride * (col as f64 + 0.5);
                for &scale in &cfg.scales {
                    let size = spec.base_size * scale;
                    for &ratio in &cfg.aspect_ratios {
                        let root = ratio.sqrt();
                        let mut bbox = BBox::new(cx, cy, size / root, size * root)?;
                        if cfg.clip {
                            bbox = bbox.clip(cfg.image_width, cfg.image_height)?;
                        }
                        anchors.push(Anchor {
                            bbox,
                            level,
                            index: anchors.len(),
                        });
                    }
                }
            }
        }
    }
    Ok(anchors)
}
