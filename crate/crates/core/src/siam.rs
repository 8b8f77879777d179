//! Single-object motion modeling.
//!
//! A 15×15 template is ROI-aligned from the object's previous box and a
//! 30×30 search crop from that box expanded about its center. Their
//! depth-wise cross-correlation gives a 16×16 response, which a decoding head
//! turns into foreground, center-ness and (l, t, r, b) regression maps. The
//! target is the cell maximizing foreground × center-ness.
//!
//! Response cell `(i, j)` is the template placed at search offset `(i, j)`,
//! so its center sits at search-grid point `(j + 7, i + 7)`; grid coordinate
//! `g` maps to image `x = region.x + (g + 0.5) / 30 · region.w` (same for y).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{expand_search_region, BBox};
use crate::tensor::{conv2d, depthwise_xcorr, read_u32, roi_align, ConvLayer, Tensor3};

pub const TEMPLATE_SIZE: usize = 15;
pub const SEARCH_SIZE: usize = 30;
pub const RESPONSE_SIZE: usize = SEARCH_SIZE - TEMPLATE_SIZE + 1;

/// Offset from a response cell to the search-grid cell under the template center.
const CENTER_OFFSET: f64 = ((TEMPLATE_SIZE - 1) / 2) as f64;
/// Denominator guard in the analytic head's min-max normalization.
const NORM_EPS: f64 = 1e-12;
/// Value of the center prior at the response border, relative to 1 at the middle.
const PRIOR_FLOOR: f64 = 0.5;
/// Smallest regressed extent, in search-grid units.
const MIN_EXTENT: f64 = 1e-3;

/// One frame's dense features plus the geometry needed to map image boxes
/// into them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub tensor: Tensor3,
    pub stride: f64,
    pub image_width: f64,
    pub image_height: f64,
}

impl FeatureMap {
    pub fn new(tensor: Tensor3, stride: f64, image_width: f64, image_height: f64) -> Result<Self> {
        if !(stride > 0.0 && stride.is_finite()) {
            return Err(Error::Config(format!("feature stride {stride} must be positive")));
        }
        if !(image_width > 0.0 && image_height > 0.0) {
            return Err(Error::Config("image dims must be positive".into()));
        }
        let (fh, fw) = (tensor.height() as f64, tensor.width() as f64);
        if (fw - image_width / stride).abs() >= 1.0 || (fh - image_height / stride).abs() >= 1.0 {
            return Err(Error::Config(format!(
                "feature map {}x{} at stride {stride} does not cover a {image_width}x{image_height} image",
                tensor.height(),
                tensor.width()
            )));
        }
        Ok(Self { tensor, stride, image_width, image_height })
    }

    /// Stride-1 feature covering exactly the tensor's extent.
    pub fn photometric(tensor: Tensor3) -> Self {
        let (h, w) = (tensor.height() as f64, tensor.width() as f64);
        Self { tensor, stride: 1.0, image_width: w, image_height: h }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateUpdate {
    /// Re-extract the template at the newly tracked box on every step.
    #[default]
    EveryFrame,
    /// Keep the template captured when the track was created or re-anchored.
    Initial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub search_factor: f64,
    pub samples_per_axis: usize,
    pub template_update: TemplateUpdate,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { search_factor: 2.0, samples_per_axis: 2, template_update: TemplateUpdate::EveryFrame }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub template: Tensor3,
    pub prev_box: BBox,
    pub object_id: u64,
}

impl TrackerState {
    pub fn init(feature: &FeatureMap, bbox: BBox, object_id: u64, config: &TrackerConfig) -> Result<Self> {
        let template = extract_template(feature, &bbox, config.samples_per_axis)?;
        Ok(Self { template, prev_box: bbox, object_id })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    /// 16×16×2: (foreground, background) probabilities.
    pub cls: Tensor3,
    /// 16×16×1 center-ness in [0, 1].
    pub cen: Tensor3,
    /// 16×16×4 non-negative (l, t, r, b) in search-grid units.
    pub reg: Tensor3,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodingHead {
    /// Training-free head: channel-mean response, min-max normalized, with a
    /// raised-cosine center prior and a constant template-sized box.
    Analytic,
    Learned(LearnedHead),
}

/// Per-branch conv stacks. Hidden layers use ReLU; the cls branch ends in a
/// softmax, cen in a sigmoid and reg in a ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedHead {
    pub cls: Vec<ConvLayer>,
    pub cen: Vec<ConvLayer>,
    pub reg: Vec<ConvLayer>,
}

/// Tensor shapes seen during one tracking step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeTrace {
    pub template: (usize, usize, usize),
    pub search: (usize, usize, usize),
    pub response: (usize, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub bbox: BBox,
    pub confidence: f64,
    /// Winning response cell (row, column).
    pub cell: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackStep {
    pub bbox: BBox,
    pub confidence: f64,
    pub state: TrackerState,
    pub shapes: ShapeTrace,
}

pub fn extract_template(feature: &FeatureMap, bbox: &BBox, samples_per_axis: usize) -> Result<Tensor3> {
    let roi = bbox.to_feature_coords(feature.stride);
    roi_align(&feature.tensor, &roi, TEMPLATE_SIZE, TEMPLATE_SIZE, samples_per_axis)
}

/// Search crop around `prev_box`, returned with the image-space region it covers.
pub fn extract_search(
    feature: &FeatureMap,
    prev_box: &BBox,
    factor: f64,
    samples_per_axis: usize,
) -> Result<(Tensor3, BBox)> {
    let region = expand_search_region(prev_box, factor, feature.image_width, feature.image_height)?;
    let roi = region.to_feature_coords(feature.stride);
    let crop = roi_align(&feature.tensor, &roi, SEARCH_SIZE, SEARCH_SIZE, samples_per_axis)?;
    Ok((crop, region))
}

/// The 16-point center prior applied by the analytic head: a raised cosine
/// lifted onto a pedestal of [`PRIOR_FLOOR`], so it peaks near 1 in the
/// middle and never vanishes at the border.
pub fn center_prior() -> [f64; RESPONSE_SIZE] {
    let mut w = [0.0; RESPONSE_SIZE];
    let n = (RESPONSE_SIZE - 1) as f64;
    for (k, v) in w.iter_mut().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n).cos();
        *v = PRIOR_FLOOR + (1.0 - PRIOR_FLOOR) * hann;
    }
    w
}

/// `template_extent` is the template box's (width, height) in search-grid units.
pub fn decode_response(response: &Tensor3, head: &DecodingHead, template_extent: (f64, f64)) -> Result<HeadOutputs> {
    if response.height() != RESPONSE_SIZE || response.width() != RESPONSE_SIZE {
        return Err(Error::Shape(format!(
            "response must be {RESPONSE_SIZE}x{RESPONSE_SIZE}, got {}x{}",
            response.height(),
            response.width()
        )));
    }
    match head {
        DecodingHead::Analytic => decode_analytic(response, template_extent),
        DecodingHead::Learned(h) => h.decode(response),
    }
}

fn decode_analytic(response: &Tensor3, template_extent: (f64, f64)) -> Result<HeadOutputs> {
    let r = response.channel_mean();
    let (lo, hi) = r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let fg: Vec<f64> = if hi == lo {
        vec![0.5; r.len()]
    } else {
        r.iter().map(|v| (v - lo) / (hi - lo + NORM_EPS)).collect()
    };
    let prior = center_prior();
    let n = RESPONSE_SIZE;
    let cls = Tensor3::from_fn(n, n, 2, |i, j, c| {
        let p = fg[i * n + j];
        (if c == 0 { p } else { 1.0 - p }) as f32
    })?;
    let cen = Tensor3::from_fn(n, n, 1, |i, j, _| (fg[i * n + j] * prior[i] * prior[j]) as f32)?;
    let (tw, th) = template_extent;
    let half = [tw / 2.0, th / 2.0, tw / 2.0, th / 2.0];
    let reg = Tensor3::from_fn(n, n, 4, |_, _, c| half[c] as f32)?;
    Ok(HeadOutputs { cls, cen, reg })
}

impl LearnedHead {
    pub fn new(cls: Vec<ConvLayer>, cen: Vec<ConvLayer>, reg: Vec<ConvLayer>) -> Result<Self> {
        for (name, stack, out) in [("cls", &cls, 2), ("cen", &cen, 1), ("reg", &reg, 4)] {
            let last = stack
                .last()
                .ok_or_else(|| Error::Shape(format!("{name} branch has no layers")))?;
            if last.out_channels != out {
                return Err(Error::Shape(format!(
                    "{name} branch must end with {out} channels, got {}",
                    last.out_channels
                )));
            }
            for pair in stack.windows(2) {
                if pair[0].out_channels != pair[1].in_channels {
                    return Err(Error::Shape(format!("{name} branch layers do not chain")));
                }
            }
        }
        Ok(Self { cls, cen, reg })
    }

    fn run_stack(stack: &[ConvLayer], input: &Tensor3) -> Result<Tensor3> {
        let mut x = input.clone();
        for (n, layer) in stack.iter().enumerate() {
            let (ph, pw) = layer.same_padding();
            if ph != pw {
                return Err(Error::Shape("learned head kernels must be square".into()));
            }
            x = conv2d(&x, layer, ph)?;
            if n + 1 < stack.len() {
                x = x.map(|v| v.max(0.0))?;
            }
        }
        Ok(x)
    }

    fn decode(&self, response: &Tensor3) -> Result<HeadOutputs> {
        let logits = Self::run_stack(&self.cls, response)?;
        let cls_data: Vec<f32> = logits
            .as_slice()
            .chunks_exact(2)
            .flat_map(|px| {
                let m = px[0].max(px[1]) as f64;
                let e0 = (px[0] as f64 - m).exp();
                let e1 = (px[1] as f64 - m).exp();
                [(e0 / (e0 + e1)) as f32, (e1 / (e0 + e1)) as f32]
            })
            .collect();
        let cls = Tensor3::new(RESPONSE_SIZE, RESPONSE_SIZE, 2, cls_data)?;
        let cen = Self::run_stack(&self.cen, response)?.map(|v| (1.0 / (1.0 + (-(v as f64)).exp())) as f32)?;
        let reg = Self::run_stack(&self.reg, response)?.map(|v| v.max(0.0))?;
        Ok(HeadOutputs { cls, cen, reg })
    }

    pub fn write_hd1<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(HD1_MAGIC)?;
        out.write_all(&3u32.to_le_bytes())?;
        for (name, stack) in [("cls", &self.cls), ("cen", &self.cen), ("reg", &self.reg)] {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(stack.len() as u32).to_le_bytes())?;
            for layer in stack {
                for d in [layer.out_channels, layer.kernel_h, layer.kernel_w, layer.in_channels] {
                    out.write_all(&(d as u32).to_le_bytes())?;
                }
                for v in layer.weights.iter().chain(&layer.bias) {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_hd1<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != HD1_MAGIC {
            return Err(Error::Format(format!("bad HD1 magic {magic:?}")));
        }
        let branches = read_u32(&mut input)?;
        let (mut cls, mut cen, mut reg) = (None, None, None);
        for _ in 0..branches {
            let len = read_u32(&mut input)? as usize;
            if len > 256 {
                return Err(Error::Format(format!("HD1 branch name length {len} is implausible")));
            }
            let mut name = vec![0u8; len];
            input.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("HD1 branch name is not UTF-8".into()))?;
            let layers = read_u32(&mut input)?;
            let mut stack = Vec::with_capacity(layers as usize);
            for _ in 0..layers {
                let dims: Vec<usize> = (0..4).map(|_| read_u32(&mut input).map(|v| v as usize)).collect::<Result<_>>()?;
                let count = dims.iter().product::<usize>();
                let weights = read_f32s(&mut input, count)?;
                let bias = read_f32s(&mut input, dims[0])?;
                stack.push(ConvLayer::new(dims[0], dims[1], dims[2], dims[3], weights, bias)?);
            }
            let slot = match name.as_str() {
                "cls" => &mut cls,
                "cen" => &mut cen,
                "reg" => &mut reg,
                other => return Err(Error::Format(format!("unknown HD1 branch {other:?}"))),
            };
            if slot.replace(stack).is_some() {
                return Err(Error::Format(format!("duplicate HD1 branch {name:?}")));
            }
        }
        let missing = |n: &str| Error::Format(format!("HD1 file lacks the {n} branch"));
        Self::new(cls.ok_or_else(|| missing("cls"))?, cen.ok_or_else(|| missing("cen"))?, reg.ok_or_else(|| missing("reg"))?)
    }
}

pub const HD1_MAGIC: &[u8; 4] = b"HD1\0";

fn read_f32s<R: Read>(input: &mut R, count: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    input.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
}

/// Pick the cell maximizing foreground × center-ness (first in row-major
/// order on ties) and map its regressed box back into image coordinates.
pub fn select_target(outputs: &HeadOutputs, region: &BBox) -> Target {
    let n = outputs.cen.width();
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for i in 0..outputs.cen.height() {
        for j in 0..n {
            let s = outputs.cls.get(i, j, 0) as f64 * outputs.cen.get(i, j, 0) as f64;
            if s > best.2 {
                best = (i, j, s);
            }
        }
    }
    let (i, j, score) = best;
    let sx = region.w / SEARCH_SIZE as f64;
    let sy = region.h / SEARCH_SIZE as f64;
    let cx = region.x + (j as f64 + CENTER_OFFSET + 0.5) * sx;
    let cy = region.y + (i as f64 + CENTER_OFFSET + 0.5) * sy;
    let [l, t, r, b] = [0, 1, 2, 3].map(|c| outputs.reg.get(i, j, c) as f64);
    let w = (l + r).max(MIN_EXTENT) * sx;
    let h = (t + b).max(MIN_EXTENT) * sy;
    Target {
        bbox: BBox { x: cx - l * sx, y: cy - t * sy, w, h },
        confidence: score.clamp(0.0, 1.0),
        cell: (i, j),
    }
}

/// Search → correlate → decode → select, then refresh the template.
pub fn track_step(
    state: &TrackerState,
    feature: &FeatureMap,
    head: &DecodingHead,
    config: &TrackerConfig,
) -> Result<TrackStep> {
    let (search, region) = extract_search(feature, &state.prev_box, config.search_factor, config.samples_per_axis)?;
    let response = depthwise_xcorr(&search, &state.template)?;
    let shapes = ShapeTrace { template: state.template.dims(), search: search.dims(), response: response.dims() };
    let c = feature.tensor.channels();
    if shapes.template != (TEMPLATE_SIZE, TEMPLATE_SIZE, c)
        || shapes.search != (SEARCH_SIZE, SEARCH_SIZE, c)
        || shapes.response != (RESPONSE_SIZE, RESPONSE_SIZE, c)
    {
        return Err(Error::Shape(format!("tracking shape chain broken: {shapes:?}")));
    }
    let extent = (
        state.prev_box.w / region.w * SEARCH_SIZE as f64,
        state.prev_box.h / region.h * SEARCH_SIZE as f64,
    );
    let outputs = decode_response(&response, head, extent)?;
    let target = select_target(&outputs, &region);
    let template = match config.template_update {
        TemplateUpdate::EveryFrame => extract_template(feature, &target.bbox, config.samples_per_axis)?,
        TemplateUpdate::Initial => state.template.clone(),
    };
    Ok(TrackStep {
        bbox: target.bbox,
        confidence: target.confidence,
        state: TrackerState { template, prev_box: target.bbox, object_id: state.object_id },
        shapes,
    })
}
