//! Training objectives as pure scalar functions with analytic gradients.
//!
//! Every function returns a [`LossValue`] whose gradient is taken with
//! respect to the prediction argument, laid out like that argument.

use crate::error::{Error, Result};
use crate::geometry::HandToObject;

/// Probability clamp for the center-ness BCE.
pub const PROB_EPS: f64 = 1e-7;
/// IoU clamp for the regression loss.
pub const IOU_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Set when the loss hit a clamp and the gradient is not meaningful.
    pub degenerate: bool,
}

impl LossValue {
    fn new(value: f64, gradient: Vec<f64>) -> Self {
        Self { value, gradient, degenerate: false }
    }
}

/// Softmax cross-entropy, stabilized by subtracting the max logit.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<LossValue> {
    if logits.len() < 2 {
        return Err(Error::Precondition(format!("cross-entropy needs >= 2 classes, got {}", logits.len())));
    }
    if target >= logits.len() {
        return Err(Error::Precondition(format!("target class {target} out of range 0..{}", logits.len())));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("logits must be finite".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let value = sum.ln() - (logits[target] - max);
    let gradient = exps
        .iter()
        .enumerate()
        .map(|(k, e)| e / sum - if k == target { 1.0 } else { 0.0 })
        .collect();
    Ok(LossValue::new(value, gradient))
}

/// Binary cross-entropy for a single center-ness prediction.
pub fn bce_centerness(pred: f64, target: f64) -> Result<LossValue> {
    if !pred.is_finite() || !(0.0..=1.0).contains(&target) {
        return Err(Error::Precondition(format!("bce needs finite pred and target in [0, 1], got {pred}, {target}")));
    }
    let p = pred.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let value = -(target * p.ln() + (1.0 - target) * (1.0 - p).ln());
    let gradient = (p - target) / (p * (1.0 - p));
    Ok(LossValue { value, gradient: vec![gradient], degenerate: p != pred })
}

/// `-ln IoU` of two boxes given as (l, t, r, b) distances from a shared point.
pub fn iou_loss(pred: [f64; 4], target: [f64; 4]) -> Result<LossValue> {
    if pred.iter().chain(&target).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Precondition("ltrb distances must be finite and non-negative".into()));
    }
    let [pl, pt, pr, pb] = pred;
    let [gl, gt, gr, gb] = target;
    let target_area = (gl + gr) * (gt + gb);
    if target_area <= 0.0 {
        return Err(Error::Precondition("target box has zero area".into()));
    }
    let pred_area = (pl + pr) * (pt + pb);
    let iw = pl.min(gl) + pr.min(gr);
    let ih = pt.min(gt) + pb.min(gb);
    let inter = iw * ih;
    let union = pred_area + target_area - inter;
    let iou = inter / union;
    if iou < IOU_EPS {
        return Ok(LossValue { value: -IOU_EPS.ln(), gradient: vec![0.0; 4], degenerate: true });
    }
    let value = -iou.ln();

    // d(-ln I/U) = dU/U - dI/I
    let pw = pl + pr;
    let ph = pt + pb;
    let d_union_dw = ph; // d pred_area / d(l or r)
    let d_union_dh = pw; // d pred_area / d(t or b)
    let step = |p: f64, g: f64| if p < g { 1.0 } else { 0.0 };
    let d_inter = [step(pl, gl) * ih, step(pt, gt) * iw, step(pr, gr) * ih, step(pb, gb) * iw];
    let d_area = [d_union_dw, d_union_dh, d_union_dw, d_union_dh];
    let gradient = (0..4)
        .map(|k| (d_area[k] - d_inter[k]) / union - d_inter[k] / inter)
        .collect();
    Ok(LossValue::new(value, gradient))
}

/// Sum of absolute differences with subgradient `sign(pred - target)`.
pub fn l1_hand2obj(pred: &HandToObject, target: &HandToObject) -> LossValue {
    let diffs: Vec<f64> = pred.to_array().iter().zip(target.to_array()).map(|(p, t)| p - t).collect();
    let value = diffs.iter().map(|d| d.abs()).sum();
    let gradient = diffs.iter().map(|&d| if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 }).collect();
    LossValue::new(value, gradient)
}

/// Smooth-L1 (Huber with transition at `beta`) summed over components.
pub fn smooth_l1(pred: &[f64], target: &[f64], beta: f64) -> Result<LossValue> {
    if pred.len() != target.len() {
        return Err(Error::Precondition("smooth-L1 inputs must have equal length".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::Precondition("smooth-L1 beta must be positive".into()));
    }
    let mut value = 0.0;
    let mut gradient = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        let d = p - t;
        if d.abs() < beta {
            value += 0.5 * d * d / beta;
            gradient.push(d / beta);
        } else {
            value += d.abs() - 0.5 * beta;
            gradient.push(d.signum());
        }
    }
    Ok(LossValue::new(value, gradient))
}

/// Plain L1 over arbitrary-length vectors.
pub fn l1(pred: &[f64], target: &[f64]) -> Result<LossValue> {
    if pred.len() != target.len() {
        return Err(Error::Precondition("L1 inputs must have equal length".into()));
    }
    let value = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum();
    let gradient = pred
        .iter()
        .zip(target)
        .map(|(p, t)| if p > t { 1.0 } else if p < t { -1.0 } else { 0.0 })
        .collect();
    Ok(LossValue::new(value, gradient))
}

/// Which loss backs the detector's box regression term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DetRegLoss {
    #[default]
    SmoothL1,
    L1,
}

impl DetRegLoss {
    pub fn evaluate(self, pred: &[f64], target: &[f64]) -> Result<LossValue> {
        match self {
            DetRegLoss::SmoothL1 => smooth_l1(pred, target, 1.0 / 9.0),
            DetRegLoss::L1 => l1(pred, target),
        }
    }
}

/// Center-ness regression target for a location with (l, t, r, b) distances
/// to the box sides.
pub fn centerness_target(ltrb: [f64; 4]) -> f64 {
    let [l, t, r, b] = ltrb;
    let ratio = |a: f64, c: f64| if a.max(c) > 0.0 { a.min(c) / a.max(c) } else { 0.0 };
    (ratio(l, r) * ratio(t, b)).sqrt()
}

pub struct ClsTerm {
    pub logits: Vec<f64>,
    pub target: usize,
}

pub struct CenTerm {
    pub pred: f64,
    pub target: f64,
}

pub struct RegTerm {
    pub pred: [f64; 4],
    pub target: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionWeights {
    pub cls: f64,
    pub cen: f64,
    pub reg: f64,
}

impl Default for MotionWeights {
    fn default() -> Self {
        Self { cls: 1.0, cen: 1.0, reg: 1.0 }
    }
}

/// Tracking-head objective: mean cls + mean cen + mean reg.
///
/// The gradient concatenates every cls logit, then every cen prediction, then
/// every reg (l, t, r, b), each scaled by its branch weight over the branch
/// term count. An empty branch contributes nothing.
pub fn motion_loss(cls: &[ClsTerm], cen: &[CenTerm], reg: &[RegTerm], weights: MotionWeights) -> Result<LossValue> {
    let mut value = 0.0;
    let mut gradient = Vec::new();
    let mut degenerate = false;

    let mut branch = |losses: Vec<LossValue>, weight: f64| {
        if losses.is_empty() {
            return;
        }
        let scale = weight / losses.len() as f64;
        for l in losses {
            value += scale * l.value;
            degenerate |= l.degenerate;
            gradient.extend(l.gradient.iter().map(|g| g * scale));
        }
    };
    branch(cls.iter().map(|t| cross_entropy(&t.logits, t.target)).collect::<Result<_>>()?, weights.cls);
    branch(cen.iter().map(|t| bce_centerness(t.pred, t.target)).collect::<Result<_>>()?, weights.cen);
    branch(reg.iter().map(|t| iou_loss(t.pred, t.target)).collect::<Result<_>>()?, weights.reg);
    Ok(LossValue { value, gradient, degenerate })
}
