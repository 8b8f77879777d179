//! Box algebra: IoU, the hand-to-object encoding, search regions and NMS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box: left, top, width, height in pixels.
///
/// Serialized as `[x, y, w, h]`. Construct through [`BBox::new`] to get the
/// positive-extent check; fields stay public for read access and for the
/// few kernels that deliberately build degenerate boxes in tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::Precondition(format!("box ({x}, {y}, {w}, {h}) has non-finite fields")));
        }
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::DegenerateBox(format!("box ({x}, {y}, {w}, {h}) has non-positive extent")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// Map image coordinates into a feature map of the given stride, where
    /// feature cell `(i, j)` is centered on image point `((j + ½)s, (i + ½)s)`.
    pub fn to_feature_coords(&self, stride: f64) -> BBox {
        BBox {
            x: self.x / stride - 0.5,
            y: self.y / stride - 0.5,
            w: self.w / stride,
            h: self.h / stride,
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.x < other.right() && other.x < self.right() && self.y < other.bottom() && other.y < self.bottom()
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// An object box expressed relative to a hand box: offsets normalized by the
/// hand size plus log size ratios. Serialized as `[dx, dy, dw, dh]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct HandToObject {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
}

impl HandToObject {
    pub fn new(dx: f64, dy: f64, dw: f64, dh: f64) -> Result<Self> {
        if ![dx, dy, dw, dh].iter().all(|v| v.is_finite()) {
            return Err(Error::Precondition("hand-to-object vector must be finite".into()));
        }
        Ok(Self { dx, dy, dw, dh })
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.dx, self.dy, self.dw, self.dh]
    }

    /// Euclidean distance in encoding space.
    pub fn distance(&self, other: &HandToObject) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl TryFrom<[f64; 4]> for HandToObject {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        HandToObject::new(v[0], v[1], v[2], v[3])
    }
}

impl From<HandToObject> for [f64; 4] {
    fn from(r: HandToObject) -> Self {
        r.to_array()
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn encode_hand_to_object(hand: &BBox, object: &BBox) -> HandToObject {
    HandToObject {
        dx: (object.x - hand.x) / hand.w,
        dy: (object.y - hand.y) / hand.h,
        dw: (object.w / hand.w).ln(),
        dh: (object.h / hand.h).ln(),
    }
}

/// Inverse of [`encode_hand_to_object`].
pub fn decode_hand_to_object(hand: &BBox, rel: &HandToObject) -> BBox {
    BBox {
        x: hand.x + rel.dx * hand.w,
        y: hand.y + rel.dy * hand.h,
        w: hand.w * rel.dw.exp(),
        h: hand.h * rel.dh.exp(),
    }
}

/// Scale `prev` about its center by `factor`, then fit it into the image.
///
/// The scaled box is first translated inside the image; it only shrinks when
/// it is larger than the image along an axis.
pub fn expand_search_region(prev: &BBox, factor: f64, image_w: f64, image_h: f64) -> Result<BBox> {
    if !(factor >= 1.0 && factor.is_finite()) {
        return Err(Error::Precondition(format!("search factor {factor} must be >= 1")));
    }
    if !(image_w > 0.0 && image_h > 0.0) {
        return Err(Error::Precondition("image dims must be positive".into()));
    }
    let image = BBox { x: 0.0, y: 0.0, w: image_w, h: image_h };
    if !prev.intersects(&image) {
        return Err(Error::EmptyRegion(format!("box {prev:?} lies outside the {image_w}x{image_h} image")));
    }
    let (cx, cy) = prev.center();
    let w = (prev.w * factor).min(image_w);
    let h = (prev.h * factor).min(image_h);
    let x = (cx - w / 2.0).clamp(0.0, image_w - w);
    let y = (cy - h / 2.0).clamp(0.0, image_h - h);
    Ok(BBox { x, y, w, h })
}

/// Greedy NMS. Keeps the highest-scoring box, drops every remaining box with
/// IoU above `iou_threshold` against it, and repeats. Equal scores keep input
/// order. Returns kept indices in keep order.
pub fn nms(boxes: &[(BBox, f64)], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].1.total_cmp(&boxes[a].1).then(a.cmp(&b)));
    let ordered: Vec<BBox> = boxes.iter().map(|(b, _)| *b).collect();
    nms_in_order(&ordered, &order, iou_threshold)
}

/// NMS over an explicit priority order (first = highest priority).
pub(crate) fn nms_in_order(boxes: &[BBox], order: &[usize], iou_threshold: f64) -> Vec<usize> {
    let mut suppressed = vec![false; boxes.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(i);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou(&boxes[i], &boxes[j]) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}
