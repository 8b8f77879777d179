//! AP evaluation over annotated frames.
//!
//! Sequences are run in full but scored only where ground truth is marked
//! annotated. Hands are matched greedily by descending score; each slice
//! (state, side, object, full state) then decides which of those matches
//! count as true positives, so every slice shares one geometric matching.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::interaction::{ContactState, HandSide};

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct GtHand {
    pub bbox: BBox,
    pub side: HandSide,
    pub contact: ContactState,
    /// Contacted object; for `OtherPerson` this is the person box if given.
    pub object: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub frame: u64,
    pub hands: Vec<GtHand>,
    pub scene: String,
    pub annotated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedObject {
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedHand {
    pub bbox: BBox,
    pub score: f64,
    pub side: HandSide,
    pub contact: ContactState,
    pub object: Option<PredictedObject>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionRecord {
    pub frame: u64,
    pub hands: Vec<PredictedHand>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApVariant {
    #[default]
    AllPoint,
    ElevenPoint,
}

impl ApVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ApVariant::AllPoint => "all_point",
            ApVariant::ElevenPoint => "11_point",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Ap {
    pub value: f64,
    /// No ground truth to recall: the value is reported as 0.
    pub undefined: bool,
}

/// For each prediction, the GT hand it matched. Predictions are visited in
/// descending score (ties by index); each takes the unmatched GT with the
/// highest IoU above `tau` (ties by lower GT index).
pub fn match_hands(preds: &[PredictedHand], gts: &[GtHand], tau: f64) -> Vec<Option<usize>> {
    let boxes: Vec<(BBox, f64)> = preds.iter().map(|p| (p.bbox, p.score)).collect();
    let gt_boxes: Vec<BBox> = gts.iter().map(|g| g.bbox).collect();
    greedy_match(&boxes, &gt_boxes, tau)
}

fn greedy_match(preds: &[(BBox, f64)], gts: &[BBox], tau: f64) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].1.total_cmp(&preds[a].1).then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    let mut out = vec![None; preds.len()];
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let o = iou(&preds[i].0, gt);
            if o > tau && best.map_or(true, |(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            out[i] = Some(g);
        }
    }
    out
}

pub fn average_precision(labeled: &[(f64, bool)], total_gt: usize) -> Ap {
    average_precision_with(labeled, total_gt, ApVariant::AllPoint)
}

pub fn average_precision_with(labeled: &[(f64, bool)], total_gt: usize, variant: ApVariant) -> Ap {
    if total_gt == 0 {
        return Ap { value: 0.0, undefined: true };
    }
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    order.sort_by(|&a, &b| labeled[b].0.total_cmp(&labeled[a].0).then(a.cmp(&b)));

    // (tp so far, rank) after each rank.
    let mut tp = 0u64;
    let mut all: Vec<(u64, u64)> = Vec::with_capacity(order.len());
    for (rank, &i) in order.iter().enumerate() {
        tp += labeled[i].1 as u64;
        all.push((tp, rank as u64 + 1));
    }
    // Monotone envelope: best precision at this rank or any later one.
    let mut env: Vec<(u64, u64)> = vec![(0, 1); all.len()];
    let mut best = (0u64, 1u64);
    for k in (0..all.len()).rev() {
        if frac_gt(all[k], best) {
            best = all[k];
        }
        env[k] = best;
    }
    let value = match variant {
        ApVariant::AllPoint => {
            // Each TP adds 1/total_gt recall at its enveloped precision.
            let fracs: Vec<(u64, u64)> = (0..order.len()).filter(|&k| labeled[order[k]].1).map(|k| env[k]).collect();
            sum_fractions(&fracs) / total_gt as f64
        }
        ApVariant::ElevenPoint => {
            let total = total_gt as u128;
            let at = |r: u128| {
                all.iter()
                    .zip(&env)
                    .find(|((t, _), _)| *t as u128 * 10 >= r * total)
                    .map_or(0.0, |(_, &(et, er))| et as f64 / er as f64)
            };
            (0..=10).map(at).sum::<f64>() / 11.0
        }
    };
    Ap { value: value.clamp(0.0, 1.0), undefined: false }
}

fn frac_gt(a: (u64, u64), b: (u64, u64)) -> bool {
    (a.0 as u128) * (b.1 as u128) > (b.0 as u128) * (a.1 as u128)
}

/// Sum of fractions, exact where 128-bit arithmetic allows so that small
/// hand-checkable cases come out correctly rounded.
fn sum_fractions(fracs: &[(u64, u64)]) -> f64 {
    fn gcd(mut a: u128, mut b: u128) -> u128 {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    }
    let exact = fracs.iter().try_fold((0u128, 1u128), |(n, d), &(a, b)| {
        let (a, b) = (a as u128, b as u128);
        let n2 = n.checked_mul(b)?.checked_add(a.checked_mul(d)?)?;
        let d2 = d.checked_mul(b)?;
        let g = gcd(n2, d2).max(1);
        Some((n2 / g, d2 / g))
    });
    match exact {
        Some((n, d)) if n < (1 << 53) && d < (1 << 53) => n as f64 / d as f64,
        _ => fracs.iter().map(|&(a, b)| a as f64 / b as f64).sum(),
    }
}

/// Per-frame match results shared by all slices.
struct FrameEval<'a> {
    pred: &'a [PredictedHand],
    gt: &'a GroundTruthFrame,
    hand_match: Vec<Option<usize>>,
    /// Object TP flag per prediction (false when it has no object).
    object_tp: Vec<bool>,
}

fn evaluate_frame<'a>(pred: &'a [PredictedHand], gt: &'a GroundTruthFrame, tau: f64) -> FrameEval<'a> {
    let hand_match = match_hands(pred, &gt.hands, tau);
    let mut order: Vec<usize> = (0..pred.len()).filter(|&i| pred[i].object.is_some()).collect();
    let score = |i: usize| pred[i].object.map_or(0.0, |o| o.score);
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    let mut used = vec![false; gt.hands.len()];
    let mut object_tp = vec![false; pred.len()];
    for i in order {
        let (Some(obj), Some(g)) = (pred[i].object, hand_match[i]) else { continue };
        if let Some(gt_obj) = gt.hands[g].object {
            if !used[g] && iou(&obj.bbox, &gt_obj) > tau {
                used[g] = true;
                object_tp[i] = true;
            }
        }
    }
    FrameEval { pred, gt, hand_match, object_tp }
}

/// Pair every annotated GT frame with its prediction record (missing
/// records mean no predictions). Unannotated frames are skipped.
fn align<'a>(preds: &'a [PredictionRecord], gts: &'a [GroundTruthFrame]) -> Result<Vec<(&'a [PredictedHand], &'a GroundTruthFrame)>> {
    let mut by_frame: BTreeMap<u64, &PredictionRecord> = BTreeMap::new();
    for p in preds {
        if by_frame.insert(p.frame, p).is_some() {
            return Err(Error::Sequencing(format!("duplicate prediction record for frame {}", p.frame)));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for g in gts {
        if !seen.insert(g.frame) {
            return Err(Error::Sequencing(format!("duplicate ground truth for frame {}", g.frame)));
        }
        if g.annotated {
            let hands = by_frame.get(&g.frame).map_or(&[][..], |p| p.hands.as_slice());
            out.push((hands, g));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SliceCounts {
    pub tp: usize,
    pub fp: usize,
    pub gt: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SliceAp {
    pub ap: Ap,
    pub counts: SliceCounts,
}

fn slice(labeled: Vec<(f64, bool)>, total_gt: usize, variant: ApVariant) -> SliceAp {
    let tp = labeled.iter().filter(|l| l.1).count();
    SliceAp {
        ap: average_precision_with(&labeled, total_gt, variant),
        counts: SliceCounts { tp, fp: labeled.len() - tp, gt: total_gt },
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FullStateReport {
    pub variant: ApVariant,
    pub frames: usize,
    pub hand: SliceAp,
    pub hand_state: SliceAp,
    pub hand_side: SliceAp,
    pub object: SliceAp,
    pub all: SliceAp,
}

fn full_state_from(frames: &[FrameEval], variant: ApVariant) -> FullStateReport {
    let mut hand = Vec::new();
    let mut state = Vec::new();
    let mut side = Vec::new();
    let mut object = Vec::new();
    let mut all = Vec::new();
    let mut hand_gt = 0;
    let mut object_gt = 0;
    for f in frames {
        hand_gt += f.gt.hands.len();
        object_gt += f.gt.hands.iter().filter(|h| h.object.is_some()).count();
        for (i, p) in f.pred.iter().enumerate() {
            let g = f.hand_match[i].map(|g| &f.gt.hands[g]);
            let state_ok = g.is_some_and(|g| g.contact == p.contact);
            let side_ok = g.is_some_and(|g| g.side == p.side);
            let object_ok = g.is_some_and(|g| match (g.object, p.object) {
                (None, None) => true,
                (Some(_), Some(_)) => f.object_tp[i],
                _ => false,
            });
            hand.push((p.score, g.is_some()));
            state.push((p.score, state_ok));
            side.push((p.score, side_ok));
            all.push((p.score, state_ok && side_ok && object_ok));
            if let Some(o) = p.object {
                object.push((o.score, f.object_tp[i]));
            }
        }
    }
    FullStateReport {
        variant,
        frames: frames.len(),
        hand: slice(hand, hand_gt, variant),
        hand_state: slice(state, hand_gt, variant),
        hand_side: slice(side, hand_gt, variant),
        object: slice(object, object_gt, variant),
        all: slice(all, hand_gt, variant),
    }
}

pub fn full_state_map(preds: &[PredictionRecord], gts: &[GroundTruthFrame], tau: f64) -> Result<FullStateReport> {
    full_state_map_with(preds, gts, tau, ApVariant::AllPoint)
}

pub fn full_state_map_with(
    preds: &[PredictionRecord],
    gts: &[GroundTruthFrame],
    tau: f64,
    variant: ApVariant,
) -> Result<FullStateReport> {
    check_tau(tau)?;
    let frames: Vec<FrameEval> = align(preds, gts)?.into_iter().map(|(p, g)| evaluate_frame(p, g, tau)).collect();
    Ok(full_state_from(&frames, variant))
}

pub fn object_ap(preds: &[PredictionRecord], gts: &[GroundTruthFrame], tau: f64) -> Result<Ap> {
    Ok(full_state_map(preds, gts, tau)?.object.ap)
}

/// Object AP sliced by contact state: a GT object belongs to the slice of
/// its hand's state; a predicted object to the state of the GT hand its
/// hand matched, or its own predicted state when unmatched.
pub fn contact_state_ap(preds: &[PredictionRecord], gts: &[GroundTruthFrame], tau: f64) -> Result<BTreeMap<ContactState, SliceAp>> {
    check_tau(tau)?;
    let frames: Vec<FrameEval> = align(preds, gts)?.into_iter().map(|(p, g)| evaluate_frame(p, g, tau)).collect();
    let mut out = BTreeMap::new();
    for s in ContactState::ALL.into_iter().filter(|&s| s != ContactState::NoContact) {
        let mut labeled = Vec::new();
        let mut total = 0;
        for f in &frames {
            total += f.gt.hands.iter().filter(|h| h.contact == s && h.object.is_some()).count();
            for (i, p) in f.pred.iter().enumerate() {
                let Some(o) = p.object else { continue };
                let state = f.hand_match[i].map_or(p.contact, |g| f.gt.hands[g].contact);
                if state == s {
                    labeled.push((o.score, f.object_tp[i]));
                }
            }
        }
        out.insert(s, slice(labeled, total, ApVariant::AllPoint));
    }
    Ok(out)
}

/// Full-state report for each scene tag among the annotated frames.
pub fn per_scene(preds: &[PredictionRecord], gts: &[GroundTruthFrame], tau: f64) -> Result<BTreeMap<String, FullStateReport>> {
    check_tau(tau)?;
    let mut groups: BTreeMap<&str, Vec<FrameEval>> = BTreeMap::new();
    for (p, g) in align(preds, gts)? {
        groups.entry(g.scene.as_str()).or_default().push(evaluate_frame(p, g, tau));
    }
    Ok(groups.into_iter().map(|(k, v)| (k.to_string(), full_state_from(&v, ApVariant::AllPoint))).collect())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("tau {tau} must lie in (0, 1)")))
    }
}

fn metric_line(out: &mut String, key: &str, s: &SliceAp) {
    let flag = if s.ap.undefined { " undefined" } else { "" };
    let c = s.counts;
    let _ = writeln!(out, "{key} {:.6}{flag} tp={} fp={} gt={}", s.ap.value, c.tp, c.fp, c.gt);
}

impl FullStateReport {
    /// One metric per line, `key value` first, counts after.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_metrics(&mut out, "");
        out
    }

    fn write_metrics(&self, out: &mut String, prefix: &str) {
        let _ = writeln!(out, "{prefix}ap_variant {}", self.variant.as_str());
        let _ = writeln!(out, "{prefix}frames {}", self.frames);
        metric_line(out, &format!("{prefix}hand_ap"), &self.hand);
        metric_line(out, &format!("{prefix}hstate_ap"), &self.hand_state);
        metric_line(out, &format!("{prefix}hside_ap"), &self.hand_side);
        metric_line(out, &format!("{prefix}object_ap"), &self.object);
        metric_line(out, &format!("{prefix}all_map"), &self.all);
    }
}

/// The text report printed by the `eval` command.
pub fn render_report(
    report: &FullStateReport,
    states: &BTreeMap<ContactState, SliceAp>,
    scenes: Option<&BTreeMap<String, FullStateReport>>,
) -> String {
    let mut out = report.to_text();
    for (s, ap) in states {
        metric_line(&mut out, &format!("state_object_ap.{}", s.as_str()), ap);
    }
    if let Some(scenes) = scenes {
        for (tag, r) in scenes {
            let tag = if tag.is_empty() { "_" } else { tag.as_str() };
            r.write_metrics(&mut out, &format!("scene.{tag}."));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn gt_hand(bbox: BBox, object: Option<BBox>) -> GtHand {
        let contact = if object.is_some() { ContactState::Portable } else { ContactState::NoContact };
        GtHand { bbox, side: HandSide::Right, contact, object }
    }

    fn pred_of(g: &GtHand, score: f64) -> PredictedHand {
        PredictedHand {
            bbox: g.bbox,
            score,
            side: g.side,
            contact: g.contact,
            object: g.object.map(|o| PredictedObject { bbox: o, score }),
        }
    }

    fn frame(frame: u64, hands: Vec<GtHand>) -> GroundTruthFrame {
        GroundTruthFrame { frame, hands, scene: "kitchen".into(), annotated: true }
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[(0.9, true)], 1).value, 1.0);
        assert_eq!(average_precision(&[], 3), Ap { value: 0.0, undefined: false });
        assert_eq!(average_precision(&[], 0), Ap { value: 0.0, undefined: true });
        let ap = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2);
        assert_eq!(ap.value, 5.0 / 6.0);
    }

    #[test]
    fn ap_ties_follow_input_order() {
        let a = average_precision(&[(0.5, false), (0.5, true)], 1).value;
        let b = average_precision(&[(0.5, true), (0.5, false)], 1).value;
        assert_eq!(a, 0.5);
        assert_eq!(b, 1.0);
    }

    #[test]
    fn eleven_point_examples() {
        let v = ApVariant::ElevenPoint;
        assert_eq!(average_precision_with(&[(0.9, true)], 1, v).value, 1.0);
        // Recall 0.5 at precision 1, recall 1 at precision 2/3.
        let ap = average_precision_with(&[(0.9, true), (0.8, false), (0.7, true)], 2, v).value;
        assert!((ap - (6.0 * 1.0 + 5.0 * 2.0 / 3.0) / 11.0).abs() < 1e-12);
        // Half the GT never recalled.
        let ap = average_precision_with(&[(0.9, true)], 2, v).value;
        assert!((ap - 6.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn ap_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let n = rng.gen_range(0..12);
            let labeled: Vec<(f64, bool)> = (0..n).map(|_| (rng.gen_range(0..5) as f64 / 4.0, rng.gen_bool(0.5))).collect();
            let total = labeled.iter().filter(|l| l.1).count() + rng.gen_range(0..3);
            let got = average_precision(&labeled, total);
            let want = tio_oracle::average_precision(&labeled, total);
            assert!((got.value - want).abs() < 1e-12, "{labeled:?} {total}");
        }
    }

    #[test]
    fn match_examples() {
        let gt = [gt_hand(b(0.0, 0.0, 10.0, 10.0), None)];
        // IoU 0.6: 10x10 shifted by 2.5 px gives 75/125.
        let p = PredictedHand { bbox: b(2.5, 0.0, 10.0, 10.0), ..pred_of(&gt[0], 0.9) };
        assert!((iou(&p.bbox, &gt[0].bbox) - 0.6).abs() < 1e-12);
        assert_eq!(match_hands(&[p.clone()], &gt, 0.5), vec![Some(0)]);
        let lo = PredictedHand { score: 0.3, ..p.clone() };
        assert_eq!(match_hands(&[lo, p], &gt, 0.5), vec![None, Some(0)]);
    }

    #[test]
    fn match_equals_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let gts: Vec<GtHand> =
                (0..3).map(|_| gt_hand(b(rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0), 10.0, 10.0), None)).collect();
            let preds: Vec<PredictedHand> = (0..5)
                .map(|_| {
                    let g = &gts[rng.gen_range(0..3)];
                    let jitter = b(g.bbox.x + rng.gen_range(-4.0..4.0), g.bbox.y + rng.gen_range(-4.0..4.0), 10.0, 10.0);
                    PredictedHand { bbox: jitter, ..pred_of(g, rng.gen_range(0..4) as f64 / 4.0) }
                })
                .collect();
            let raw: Vec<([f64; 4], f64)> = preds.iter().map(|p| (p.bbox.to_array(), p.score)).collect();
            let raw_gt: Vec<[f64; 4]> = gts.iter().map(|g| g.bbox.to_array()).collect();
            assert_eq!(match_hands(&preds, &gts, 0.5), tio_oracle::greedy_match(&raw, &raw_gt, 0.5));
        }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let gts = vec![
            frame(0, vec![gt_hand(b(0.0, 0.0, 10.0, 10.0), Some(b(12.0, 0.0, 8.0, 8.0))), gt_hand(b(40.0, 40.0, 10.0, 10.0), None)]),
            frame(1, vec![gt_hand(b(5.0, 0.0, 10.0, 10.0), Some(b(20.0, 5.0, 8.0, 8.0)))]),
        ];
        let preds: Vec<PredictionRecord> = gts
            .iter()
            .map(|g| PredictionRecord { frame: g.frame, hands: g.hands.iter().map(|h| pred_of(h, 0.9)).collect() })
            .collect();
        let r = full_state_map(&preds, &gts, 0.5).unwrap();
        for s in [r.hand, r.hand_state, r.hand_side, r.object, r.all] {
            assert_eq!(s.ap.value, 1.0);
        }
        assert_eq!(r.hand.counts, SliceCounts { tp: 3, fp: 0, gt: 3 });
        assert_eq!(r.object.counts, SliceCounts { tp: 2, fp: 0, gt: 2 });
    }

    #[test]
    fn empty_predictions_score_zero() {
        let gts = vec![frame(0, vec![gt_hand(b(0.0, 0.0, 10.0, 10.0), Some(b(12.0, 0.0, 8.0, 8.0)))])];
        let r = full_state_map(&[], &gts, 0.5).unwrap();
        assert_eq!(r.hand.ap, Ap { value: 0.0, undefined: false });
        assert_eq!(r.all.ap.value, 0.0);
    }

    #[test]
    fn flipped_side_fails_only_side_slices() {
        let gts = vec![frame(0, vec![gt_hand(b(0.0, 0.0, 10.0, 10.0), None)])];
        let mut p = pred_of(&gts[0].hands[0], 0.8);
        p.side = p.side.flipped();
        let r = full_state_map(&[PredictionRecord { frame: 0, hands: vec![p] }], &gts, 0.5).unwrap();
        assert_eq!(r.hand.ap.value, 1.0);
        assert_eq!(r.hand_state.ap.value, 1.0);
        assert_eq!(r.hand_side.ap.value, 0.0);
        assert_eq!(r.all.ap.value, 0.0);
    }

    #[test]
    fn object_on_wrong_hand_is_fp() {
        let obj_a = b(12.0, 0.0, 8.0, 8.0);
        let gts = vec![frame(0, vec![gt_hand(b(0.0, 0.0, 10.0, 10.0), Some(obj_a)), gt_hand(b(50.0, 0.0, 10.0, 10.0), None)])];
        let mut wrong = pred_of(&gts[0].hands[1], 0.9);
        wrong.object = Some(PredictedObject { bbox: obj_a, score: 0.9 });
        let mut right_hand = pred_of(&gts[0].hands[0], 0.8);
        right_hand.object = None;
        let preds = vec![PredictionRecord { frame: 0, hands: vec![wrong, right_hand] }];
        let r = full_state_map(&preds, &gts, 0.5).unwrap();
        assert_eq!(r.object.counts, SliceCounts { tp: 0, fp: 1, gt: 1 });
        assert_eq!(r.object.ap.value, 0.0);
    }

    #[test]
    fn unannotated_frames_are_ignored() {
        let hand = gt_hand(b(0.0, 0.0, 10.0, 10.0), Some(b(12.0, 0.0, 8.0, 8.0)));
        let mut gts = vec![frame(0, vec![hand.clone()]), frame(1, vec![hand.clone()])];
        gts[1].annotated = false;
        // Frame 1 predictions are garbage but must not count.
        let junk = PredictedHand { bbox: b(80.0, 80.0, 5.0, 5.0), ..pred_of(&hand, 0.99) };
        let preds = vec![
            PredictionRecord { frame: 0, hands: vec![pred_of(&hand, 0.9)] },
            PredictionRecord { frame: 1, hands: vec![junk] },
        ];
        let r = full_state_map(&preds, &gts, 0.5).unwrap();
        assert_eq!(r.frames, 1);
        assert_eq!(r.all.ap.value, 1.0);
        // Same as evaluating the annotated frame alone.
        let alone = full_state_map(&preds[..1], &gts[..1], 0.5).unwrap();
        assert_eq!(r, alone);
    }

    #[test]
    fn duplicate_frames_rejected() {
        let gts = vec![frame(0, vec![]), frame(0, vec![])];
        assert!(matches!(full_state_map(&[], &gts, 0.5), Err(Error::Sequencing(_))));
        assert!(full_state_map(&[], &[], 1.0).is_err());
    }

    #[test]
    fn state_slices() {
        let mk = |s: ContactState, obj: Option<BBox>| GtHand { bbox: b(0.0, 0.0, 10.0, 10.0), side: HandSide::Left, contact: s, object: obj };
        let gts = vec![
            frame(0, vec![mk(ContactState::Portable, Some(b(10.0, 0.0, 8.0, 8.0)))]),
            frame(1, vec![mk(ContactState::NonPortable, Some(b(10.0, 0.0, 8.0, 8.0)))]),
            frame(2, vec![mk(ContactState::OtherPerson, Some(b(10.0, 0.0, 30.0, 30.0)))]),
        ];
        let mut preds: Vec<PredictionRecord> =
            gts.iter().map(|g| PredictionRecord { frame: g.frame, hands: vec![pred_of(&g.hands[0], 0.9)] }).collect();
        // Miss the non-portable object.
        preds[1].hands[0].object = Some(PredictedObject { bbox: b(60.0, 60.0, 8.0, 8.0), score: 0.9 });
        let s = contact_state_ap(&preds, &gts, 0.5).unwrap();
        assert_eq!(s[&ContactState::Portable].ap.value, 1.0);
        assert_eq!(s[&ContactState::NonPortable].ap.value, 0.0);
        assert_eq!(s[&ContactState::OtherPerson].ap.value, 1.0);
        assert!(s[&ContactState::SelfContact].ap.undefined);
    }

    #[test]
    fn report_has_fixed_keys() {
        let r = FullStateReport::default();
        let text = render_report(&r, &BTreeMap::new(), None);
        for key in ["hand_ap ", "hstate_ap ", "hside_ap ", "object_ap ", "all_map "] {
            assert_eq!(text.lines().filter(|l| l.starts_with(key)).count(), 1, "{key}");
        }
    }

    proptest! {
        #[test]
        fn ap_in_unit_interval_and_monotone(
            labels in proptest::collection::vec((0u8..10, any::<bool>()), 0..20),
            extra in 0usize..4,
            flip in any::<prop::sample::Index>(),
        ) {
            let labeled: Vec<(f64, bool)> = labels.iter().map(|&(s, t)| (s as f64 / 10.0, t)).collect();
            let total = labeled.iter().filter(|l| l.1).count() + extra;
            let ap = average_precision(&labeled, total).value;
            prop_assert!((0.0..=1.0).contains(&ap));
            let tps: Vec<usize> = (0..labeled.len()).filter(|&i| labeled[i].1).collect();
            if !tps.is_empty() {
                let mut worse = labeled.clone();
                worse[tps[flip.index(tps.len())]].1 = false;
                prop_assert!(average_precision(&worse, total).value <= ap + 1e-15);
            }
        }

        #[test]
        fn ap_depends_only_on_order(
            labels in proptest::collection::vec((0u32..1000, any::<bool>()), 1..20),
        ) {
            let labeled: Vec<(f64, bool)> = labels.iter().map(|&(s, t)| (s as f64, t)).collect();
            let rescaled: Vec<(f64, bool)> = labeled.iter().map(|&(s, t)| ((s / 1000.0).powi(3) * 7.0 + 1.0, t)).collect();
            let total = labeled.len();
            prop_assert_eq!(average_precision(&labeled, total), average_precision(&rescaled, total));
        }
    }
}
