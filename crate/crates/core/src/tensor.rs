//! Dense H×W×C tensors and the numeric kernels used by the Siamese matcher.
//!
//! Layout is row-major with the channel innermost: element `(i, j, c)` lives
//! at `(i * width + j) * channels + c`. Grid point `(i, j)` sits at the
//! continuous coordinate `x = j, y = i`.
//!
//! Values are `f32`; every reduction accumulates in `f64`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "tensor dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor construction"));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    data.push(f(i, j, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    // Kernel outputs go through here so the finiteness invariant holds
    // without re-validating shapes we computed ourselves.
    fn from_kernel(height: usize, width: usize, channels: usize, data: Vec<f32>, op: &'static str) -> Result<Self> {
        debug_assert_eq!(data.len(), height * width * channels);
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(op));
        }
        Ok(Self { height, width, channels, data })
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

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.width + j) * self.channels + c
    }

    /// Panics when out of range, like slice indexing.
    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f32 {
        assert!(i < self.height && j < self.width && c < self.channels, "tensor index out of range");
        self.data[self.offset(i, j, c)]
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Result<Self> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Self::from_kernel(self.height, self.width, self.channels, data, "map")
    }

    /// Copy out a single channel as an H×W×1 tensor.
    pub fn channel(&self, c: usize) -> Result<Self> {
        if c >= self.channels {
            return Err(Error::Precondition(format!("channel {c} out of range 0..{}", self.channels)));
        }
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Ok(Self { height: self.height, width: self.width, channels: 1, data })
    }

    /// Mean over channels, one value per grid cell (row-major).
    pub fn channel_mean(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.channels)
            .map(|px| px.iter().map(|&v| v as f64).sum::<f64>() / self.channels as f64)
            .collect()
    }

    /// Bilinear interpolation at continuous `(x, y)` in channel `c`.
    ///
    /// Coordinates within one pixel of the border are clamped onto the grid;
    /// anything beyond `[-1, H]` × `[-1, W]` reads as zero.
    pub fn bilinear_sample(&self, x: f64, y: f64, c: usize) -> Result<f32> {
        if c >= self.channels {
            return Err(Error::Precondition(format!("channel {c} out of range 0..{}", self.channels)));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Precondition("sample coordinates must be finite".into()));
        }
        Ok(self.sample_unchecked(x, y, c) as f32)
    }

    fn sample_unchecked(&self, x: f64, y: f64, c: usize) -> f64 {
        let (h, w) = (self.height, self.width);
        if y < -1.0 || y > h as f64 || x < -1.0 || x > w as f64 {
            return 0.0;
        }
        let (y0, y1, ly) = axis_neighbors(y, h);
        let (x0, x1, lx) = axis_neighbors(x, w);
        let v00 = self.data[self.offset(y0, x0, c)] as f64;
        let v01 = self.data[self.offset(y0, x1, c)] as f64;
        let v10 = self.data[self.offset(y1, x0, c)] as f64;
        let v11 = self.data[self.offset(y1, x1, c)] as f64;
        (1.0 - ly) * ((1.0 - lx) * v00 + lx * v01) + ly * ((1.0 - lx) * v10 + lx * v11)
    }

    pub fn write_ft1<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(FT1_MAGIC)?;
        for dim in [self.height, self.width, self.channels] {
            let dim = u32::try_from(dim).map_err(|_| Error::Format("dimension exceeds u32".into()))?;
            out.write_all(&dim.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_ft1<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != FT1_MAGIC {
            return Err(Error::Format(format!("bad FT1 magic {magic:?}")));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = read_u32(&mut input)? as usize;
        }
        let [h, w, c] = dims;
        let count = h
            .checked_mul(w)
            .and_then(|v| v.checked_mul(c))
            .ok_or_else(|| Error::Format("FT1 dims overflow".into()))?;
        let mut bytes = vec![0u8; count * 4];
        input.read_exact(&mut bytes).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format(format!("FT1 payload truncated, expected {count} values")),
            _ => Error::Io(e),
        })?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(h, w, c, data).map_err(|e| Error::Format(format!("invalid FT1 tensor: {e}")))
    }
}

pub const FT1_MAGIC: &[u8; 4] = b"FT1\0";

pub(crate) fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

// Lower/upper neighbor along one axis plus the fractional weight of the upper
// one, with the border clamp applied.
#[inline]
fn axis_neighbors(v: f64, len: usize) -> (usize, usize, f64) {
    let v = v.max(0.0);
    let lo = v.floor() as usize;
    if lo >= len - 1 {
        (len - 1, len - 1, 0.0)
    } else {
        (lo, lo + 1, v - lo as f64)
    }
}

/// ROI align of `roi` (in feature coordinates) onto an `out_h × out_w` grid.
///
/// Each output cell averages `samples_per_axis²` bilinear samples placed at
/// the centers of a regular sub-grid of the cell.
pub fn roi_align(
    feature: &Tensor3,
    roi: &BBox,
    out_h: usize,
    out_w: usize,
    samples_per_axis: usize,
) -> Result<Tensor3> {
    if !(roi.w > 0.0 && roi.h > 0.0) {
        return Err(Error::DegenerateBox(format!("roi {roi:?} has non-positive extent")));
    }
    if out_h == 0 || out_w == 0 || samples_per_axis == 0 {
        return Err(Error::Precondition("roi_align output size and sampling must be positive".into()));
    }
    let c = feature.channels;
    let cell_w = roi.w / out_w as f64;
    let cell_h = roi.h / out_h as f64;
    let step_w = cell_w / samples_per_axis as f64;
    let step_h = cell_h / samples_per_axis as f64;
    let norm = (samples_per_axis * samples_per_axis) as f64;

    let mut data = Vec::with_capacity(out_h * out_w * c);
    let mut acc = vec![0.0f64; c];
    for i in 0..out_h {
        for j in 0..out_w {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for sy in 0..samples_per_axis {
                let y = roi.y + i as f64 * cell_h + (sy as f64 + 0.5) * step_h;
                for sx in 0..samples_per_axis {
                    let x = roi.x + j as f64 * cell_w + (sx as f64 + 0.5) * step_w;
                    for (k, a) in acc.iter_mut().enumerate() {
                        *a += feature.sample_unchecked(x, y, k);
                    }
                }
            }
            data.extend(acc.iter().map(|a| (a / norm) as f32));
        }
    }
    Tensor3::from_kernel(out_h, out_w, c, data, "roi_align")
}

/// Valid-mode depth-wise cross-correlation (no kernel flip).
///
/// `out(i, j, c) = Σ_{u,v} template(u, v, c) · search(i + u, j + v, c)`.
pub fn depthwise_xcorr(search: &Tensor3, template: &Tensor3) -> Result<Tensor3> {
    if search.channels != template.channels {
        return Err(Error::Shape(format!(
            "channel mismatch: search has {}, template has {}",
            search.channels, template.channels
        )));
    }
    if template.height > search.height || template.width > search.width {
        return Err(Error::Shape(format!(
            "template {}x{} larger than search {}x{}",
            template.height, template.width, search.height, search.width
        )));
    }
    let c = search.channels;
    let (th, tw) = (template.height, template.width);
    let oh = search.height - th + 1;
    let ow = search.width - tw + 1;
    let srow = search.width * c;
    let trow = tw * c;

    let mut data = Vec::with_capacity(oh * ow * c);
    let mut acc = vec![0.0f64; c];
    for i in 0..oh {
        for j in 0..ow {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for u in 0..th {
                let s = &search.data[(i + u) * srow + j * c..][..trow];
                let t = &template.data[u * trow..][..trow];
                for (sp, tp) in s.chunks_exact(c).zip(t.chunks_exact(c)) {
                    for ((a, &sv), &tv) in acc.iter_mut().zip(sp).zip(tp) {
                        *a += sv as f64 * tv as f64;
                    }
                }
            }
            data.extend(acc.iter().map(|&a| a as f32));
        }
    }
    Tensor3::from_kernel(oh, ow, c, data, "depthwise_xcorr")
}

/// Weights and bias for one conv layer, laid out `[out_c][kh][kw][in_c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvLayer {
    pub fn new(
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 || kernel_h == 0 || kernel_w == 0 {
            return Err(Error::Shape("conv layer dims must be positive".into()));
        }
        if kernel_h % 2 == 0 || kernel_w % 2 == 0 {
            return Err(Error::Shape(format!("kernel {kernel_h}x{kernel_w} must have odd spatial dims")));
        }
        if weights.len() != out_channels * kernel_h * kernel_w * in_channels {
            return Err(Error::Shape(format!(
                "weight count {} does not match {out_channels}x{kernel_h}x{kernel_w}x{in_channels}",
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Shape(format!("bias count {} does not match {out_channels}", bias.len())));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("conv layer weights"));
        }
        Ok(Self { out_channels, kernel_h, kernel_w, in_channels, weights, bias })
    }

    /// Padding that keeps spatial dims unchanged.
    pub fn same_padding(&self) -> (usize, usize) {
        ((self.kernel_h - 1) / 2, (self.kernel_w - 1) / 2)
    }
}

/// Stride-1 zero-padded convolution (cross-correlation form).
pub fn conv2d(input: &Tensor3, layer: &ConvLayer, padding: usize) -> Result<Tensor3> {
    if layer.in_channels != input.channels {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, tensor has {}",
            layer.in_channels, input.channels
        )));
    }
    let (h, w, ic) = input.dims();
    if h + 2 * padding < layer.kernel_h || w + 2 * padding < layer.kernel_w {
        return Err(Error::Shape("kernel larger than padded input".into()));
    }
    let oh = h + 2 * padding - layer.kernel_h + 1;
    let ow = w + 2 * padding - layer.kernel_w + 1;
    let oc = layer.out_channels;
    let (kh, kw) = (layer.kernel_h, layer.kernel_w);

    let mut data = vec![0.0f32; oh * ow * oc];
    for i in 0..oh {
        for j in 0..ow {
            for o in 0..oc {
                let mut acc = layer.bias[o] as f64;
                for u in 0..kh {
                    let yi = (i + u) as isize - padding as isize;
                    if yi < 0 || yi >= h as isize {
                        continue;
                    }
                    for v in 0..kw {
                        let xi = (j + v) as isize - padding as isize;
                        if xi < 0 || xi >= w as isize {
                            continue;
                        }
                        let px = &input.data[input.offset(yi as usize, xi as usize, 0)..][..ic];
                        let kern = &layer.weights[((o * kh + u) * kw + v) * ic..][..ic];
                        acc += px.iter().zip(kern).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>();
                    }
                }
                data[(i * ow + j) * oc + o] = acc as f32;
            }
        }
    }
    Tensor3::from_kernel(oh, ow, oc, data, "conv2d")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Tensor3 {
        Tensor3::from_fn(h, w, c, |_, _, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    fn bbox(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor3::new(0, 1, 1, vec![]).is_err());
        assert!(Tensor3::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(matches!(
            Tensor3::new(1, 1, 1, vec![f32::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn bilinear_constant_and_grid_points() {
        let t = Tensor3::filled(4, 5, 2, 5.0).unwrap();
        for (x, y) in [(0.0, 0.0), (1.3, 2.7), (3.99, 0.01), (4.0, 3.0)] {
            assert_eq!(t.bilinear_sample(x, y, 1).unwrap(), 5.0);
        }
        let r = Tensor3::from_fn(4, 5, 1, |i, j, _| (10 * i + j) as f32).unwrap();
        assert_eq!(r.bilinear_sample(2.0, 3.0, 0).unwrap(), r.get(3, 2, 0));
    }

    #[test]
    fn bilinear_two_by_two_center() {
        let t = Tensor3::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.bilinear_sample(0.5, 0.5, 0).unwrap(), 1.5);
    }

    #[test]
    fn bilinear_border_band_and_beyond() {
        let t = Tensor3::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        // Within one pixel of the border the value is clamped onto the grid.
        assert_eq!(t.bilinear_sample(-0.5, 0.0, 0).unwrap(), 0.0);
        assert_eq!(t.bilinear_sample(1.5, 1.0, 0).unwrap(), 3.0);
        assert_eq!(t.bilinear_sample(2.0, -1.0, 0).unwrap(), 1.0);
        // Beyond that it is zero.
        assert_eq!(t.bilinear_sample(2.01, 1.0, 0).unwrap(), 0.0);
        assert_eq!(t.bilinear_sample(0.0, -1.5, 0).unwrap(), 0.0);
    }

    #[test]
    fn bilinear_channel_out_of_range() {
        let t = Tensor3::zeros(2, 2, 3).unwrap();
        assert!(matches!(t.bilinear_sample(0.0, 0.0, 3), Err(Error::Precondition(_))));
    }

    #[test]
    fn bilinear_matches_tent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = random_tensor(&mut rng, 6, 7, 3);
        for _ in 0..500 {
            let x = rng.gen_range(-2.0..9.0);
            let y = rng.gen_range(-2.0..8.0);
            let c = rng.gen_range(0..3);
            let want = tio_oracle::tent_bilinear(t.as_slice(), 6, 7, 3, x, y, c);
            let got = t.bilinear_sample(x, y, c).unwrap() as f64;
            assert!((got - want).abs() < 1e-5, "({x}, {y}, {c}): {got} vs {want}");
        }
    }

    #[test]
    fn roi_align_constant_feature() {
        let f = Tensor3::filled(20, 20, 2, 3.25).unwrap();
        for b in [bbox(0.0, 0.0, 19.0, 19.0), bbox(2.3, 4.7, 5.1, 9.9), bbox(-0.5, -0.5, 20.0, 20.0)] {
            let out = roi_align(&f, &b, 15, 15, 2).unwrap();
            assert_eq!(out.dims(), (15, 15, 2));
            assert!(out.as_slice().iter().all(|&v| (v - 3.25).abs() < 1e-6));
        }
    }

    #[test]
    fn roi_align_integer_region_is_exact_crop() {
        let f = Tensor3::from_fn(10, 12, 2, |i, j, c| (i * 100 + j * 3 + c) as f32).unwrap();
        // Pixel centers sit on integer coordinates, so the box covering pixels
        // rows 2..6, cols 3..8 starts half a pixel before them.
        let out = roi_align(&f, &bbox(2.5, 1.5, 5.0, 4.0), 4, 5, 1).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                for c in 0..2 {
                    assert_eq!(out.get(i, j, c), f.get(i + 2, j + 3, c));
                }
            }
        }
    }

    #[test]
    fn roi_align_ramp_matches_oracle() {
        let f = Tensor3::from_fn(4, 4, 1, |_, j, _| j as f32).unwrap();
        for roi in [[0.0, 0.0, 4.0, 4.0], [-0.5, -0.5, 4.0, 4.0]] {
            let out = roi_align(&f, &bbox(roi[0], roi[1], roi[2], roi[3]), 2, 2, 2).unwrap();
            let want = tio_oracle::roi_align(f.as_slice(), 4, 4, 1, roi, 2, 2, 2);
            for (g, w) in out.as_slice().iter().zip(&want) {
                assert!((*g as f64 - w).abs() < 1e-6);
            }
            assert_eq!(out.get(0, 0, 0), out.get(1, 0, 0));
            assert!(out.get(0, 1, 0) > out.get(0, 0, 0));
        }
        // Frozen from the oracle: samples at x = 0, 1 and 2, 3 for the
        // half-pixel-shifted box.
        let out = roi_align(&f, &bbox(-0.5, -0.5, 4.0, 4.0), 2, 2, 2).unwrap();
        assert_eq!(out.as_slice(), &[0.5, 2.5, 0.5, 2.5]);
    }

    #[test]
    fn roi_align_rejects_degenerate() {
        let f = Tensor3::zeros(4, 4, 1).unwrap();
        let flat = BBox { x: 0.0, y: 0.0, w: 0.0, h: 2.0 };
        assert!(matches!(roi_align(&f, &flat, 2, 2, 2), Err(Error::DegenerateBox(_))));
    }

    #[test]
    fn xcorr_zero_template() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_tensor(&mut rng, 30, 30, 4);
        let t = Tensor3::zeros(15, 15, 4).unwrap();
        let r = depthwise_xcorr(&s, &t).unwrap();
        assert_eq!(r.dims(), (16, 16, 4));
        assert!(r.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn xcorr_constant_closed_form() {
        let s = Tensor3::filled(30, 30, 3, 0.5).unwrap();
        let t = Tensor3::filled(15, 15, 3, 2.0).unwrap();
        let r = depthwise_xcorr(&s, &t).unwrap();
        assert!(r.as_slice().iter().all(|&v| v == 225.0 * 0.5 * 2.0));
    }

    #[test]
    fn xcorr_delta_kernel_is_identity_crop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_tensor(&mut rng, 30, 30, 2);
        let t = Tensor3::from_fn(15, 15, 2, |i, j, _| if i == 0 && j == 0 { 1.0 } else { 0.0 }).unwrap();
        let r = depthwise_xcorr(&s, &t).unwrap();
        let naive = tio_oracle::depthwise_xcorr(s.as_slice(), 30, 30, t.as_slice(), 15, 15, 2);
        for i in 0..16 {
            for j in 0..16 {
                for c in 0..2 {
                    assert_eq!(r.get(i, j, c), s.get(i, j, c));
                    assert_eq!(r.get(i, j, c) as f64, naive[(i * 16 + j) * 2 + c]);
                }
            }
        }
    }

    #[test]
    fn xcorr_shape_errors() {
        let a = Tensor3::zeros(10, 10, 2).unwrap();
        let b = Tensor3::zeros(5, 5, 3).unwrap();
        let big = Tensor3::zeros(11, 5, 2).unwrap();
        assert!(matches!(depthwise_xcorr(&a, &b), Err(Error::Shape(_))));
        assert!(matches!(depthwise_xcorr(&a, &big), Err(Error::Shape(_))));
    }

    #[test]
    fn conv_identity_and_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor(&mut rng, 6, 5, 3);
        let mut w = vec![0.0; 9];
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        let id = ConvLayer::new(3, 1, 1, 3, w, vec![0.0; 3]).unwrap();
        assert_eq!(conv2d(&x, &id, 0).unwrap(), x);

        let zero = ConvLayer::new(2, 3, 3, 3, vec![0.0; 2 * 9 * 3], vec![0.75, -1.0]).unwrap();
        let out = conv2d(&x, &zero, 1).unwrap();
        assert_eq!(out.dims(), (6, 5, 2));
        for px in out.as_slice().chunks(2) {
            assert_eq!(px, &[0.75, -1.0]);
        }
    }

    #[test]
    fn conv_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor(&mut rng, 5, 5, 3);
        let w: Vec<f32> = (0..4 * 9 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let layer = ConvLayer::new(4, 3, 3, 3, w.clone(), b.clone()).unwrap();
        for pad in [0, 1, 2] {
            let out = conv2d(&x, &layer, pad).unwrap();
            let (want, oh, ow) = tio_oracle::conv2d(x.as_slice(), 5, 5, 3, &w, &b, 4, 3, 3, pad);
            assert_eq!(out.dims(), (oh, ow, 4));
            for (g, e) in out.as_slice().iter().zip(&want) {
                assert!((*g as f64 - e).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn conv_rejects_mismatch_and_even_kernels() {
        let x = Tensor3::zeros(4, 4, 2).unwrap();
        let layer = ConvLayer::new(1, 1, 1, 3, vec![0.0; 3], vec![0.0]).unwrap();
        assert!(matches!(conv2d(&x, &layer, 0), Err(Error::Shape(_))));
        assert!(ConvLayer::new(1, 2, 2, 1, vec![0.0; 4], vec![0.0]).is_err());
    }

    #[test]
    fn ft1_roundtrip_and_bad_magic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_tensor(&mut rng, 3, 4, 5);
        let mut buf = Vec::new();
        t.write_ft1(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"FT1\0");
        assert_eq!(&buf[4..8], &3u32.to_le_bytes());
        assert_eq!(buf.len(), 16 + 3 * 4 * 5 * 4);
        assert_eq!(Tensor3::read_ft1(buf.as_slice()).unwrap(), t);

        buf[0] = b'X';
        assert!(matches!(Tensor3::read_ft1(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn ft1_truncated_payload() {
        let t = Tensor3::zeros(2, 2, 2).unwrap();
        let mut buf = Vec::new();
        t.write_ft1(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(Tensor3::read_ft1(buf.as_slice()), Err(Error::Format(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn xcorr_scales_linearly(seed in any::<u64>(), alpha in -4.0f32..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_tensor(&mut rng, 12, 11, 3);
            let t = random_tensor(&mut rng, 5, 4, 3);
            let base = depthwise_xcorr(&s, &t).unwrap();
            let scaled = depthwise_xcorr(&s, &t.map(|v| v * alpha).unwrap()).unwrap();
            for (b, s) in base.as_slice().iter().zip(scaled.as_slice()) {
                let want = b * alpha;
                prop_assert!((s - want).abs() <= 1e-6 * want.abs().max(1.0));
            }
        }

        #[test]
        fn xcorr_matches_oracle(seed in any::<u64>(), sh in 1usize..20, sw in 1usize..20, c in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let th = rng.gen_range(1..=sh);
            let tw = rng.gen_range(1..=sw);
            let s = random_tensor(&mut rng, sh, sw, c);
            let t = random_tensor(&mut rng, th, tw, c);
            let got = depthwise_xcorr(&s, &t).unwrap();
            let want = tio_oracle::depthwise_xcorr(s.as_slice(), sh, sw, t.as_slice(), th, tw, c);
            for (g, w) in got.as_slice().iter().zip(&want) {
                prop_assert!((*g as f64 - w).abs() < 1e-5);
            }
        }

        #[test]
        fn roi_align_shift_equivariant(seed in any::<u64>(), k in -10.0f32..10.0,
                                       x in 0.0f64..8.0, y in 0.0f64..8.0, w in 0.5f64..8.0, h in 0.5f64..8.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_tensor(&mut rng, 16, 16, 2);
            let roi = bbox(x, y, w, h);
            let base = roi_align(&f, &roi, 3, 4, 2).unwrap();
            let shifted = roi_align(&f.map(|v| v + k).unwrap(), &roi, 3, 4, 2).unwrap();
            for (b, s) in base.as_slice().iter().zip(shifted.as_slice()) {
                prop_assert!((s - (b + k)).abs() < 1e-4);
            }
        }

        #[test]
        fn roi_align_constant_anywhere(v in -5.0f32..5.0, x in -1.0f64..10.0, y in -1.0f64..10.0,
                                       w in 0.1f64..5.0, h in 0.1f64..5.0) {
            let f = Tensor3::filled(16, 16, 1, v).unwrap();
            let out = roi_align(&f, &bbox(x, y, w, h), 5, 5, 2).unwrap();
            prop_assert!(out.as_slice().iter().all(|&o| (o - v).abs() < 1e-5));
        }
    }
}
