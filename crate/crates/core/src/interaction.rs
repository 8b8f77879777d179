//! Hand-to-object association.
//!
//! Each detected hand carries a predicted hand-to-object vector. A candidate
//! object's compatibility with the hand is `exp(-d)`, where `d` is the L2
//! distance between that prediction and the candidate's own encoding relative
//! to the hand box. Hands in object contact take the most compatible
//! candidate.

use serde::{Deserialize, Serialize};

use crate::geometry::{encode_hand_to_object, BBox, HandToObject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HandSide {
    #[serde(rename = "l")]
    Left,
    #[serde(rename = "r")]
    Right,
}

impl HandSide {
    pub fn flipped(self) -> Self {
        match self {
            HandSide::Left => HandSide::Right,
            HandSide::Right => HandSide::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContactState {
    #[serde(rename = "none")]
    NoContact,
    #[serde(rename = "self")]
    SelfContact,
    #[serde(rename = "other")]
    OtherPerson,
    #[serde(rename = "portable")]
    Portable,
    #[serde(rename = "nonportable")]
    NonPortable,
}

impl ContactState {
    pub const ALL: [ContactState; 5] = [
        ContactState::NoContact,
        ContactState::SelfContact,
        ContactState::OtherPerson,
        ContactState::Portable,
        ContactState::NonPortable,
    ];

    /// Portable or non-portable: the hand is holding something we can track.
    pub fn is_object_contact(self) -> bool {
        matches!(self, ContactState::Portable | ContactState::NonPortable)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContactState::NoContact => "none",
            ContactState::SelfContact => "self",
            ContactState::OtherPerson => "other",
            ContactState::Portable => "portable",
            ContactState::NonPortable => "nonportable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandDetection {
    pub bbox: BBox,
    pub score: f64,
    pub side: HandSide,
    pub contact: ContactState,
    pub predicted_rel: HandToObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CandidateSource {
    #[serde(rename = "det")]
    Detector,
    #[serde(rename = "trk")]
    Tracker,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectCandidate {
    pub bbox: BBox,
    pub score: f64,
    pub source: CandidateSource,
    /// Set for tracker-sourced candidates.
    pub object_id: Option<u64>,
}

impl ObjectCandidate {
    pub fn detected(bbox: BBox, score: f64) -> Self {
        Self { bbox, score, source: CandidateSource::Detector, object_id: None }
    }

    pub fn tracked(bbox: BBox, score: f64, object_id: u64) -> Self {
        Self { bbox, score, source: CandidateSource::Tracker, object_id: Some(object_id) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentStatus {
    Assigned,
    /// Hand is not in contact with an object.
    NotInContact,
    /// Hand is in contact but there were no candidates to choose from.
    NoCandidates,
    /// Best candidate scored under the configured compatibility floor.
    BelowFloor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub hand_index: usize,
    pub object_index: Option<usize>,
    /// Compatibility of the best candidate, 0 when none was scored.
    pub compatibility: f64,
    pub status: AssignmentStatus,
}

pub fn compatibility_score(hand: &HandDetection, candidate: &ObjectCandidate) -> f64 {
    let actual = encode_hand_to_object(&hand.bbox, &candidate.bbox);
    (-hand.predicted_rel.distance(&actual)).exp()
}

/// Per-hand argmax of [`compatibility_score`] (ties go to the lower candidate
/// index). Candidates may be shared between hands.
pub fn assign_objects(
    hands: &[HandDetection],
    candidates: &[ObjectCandidate],
    compatibility_floor: Option<f64>,
) -> Vec<Assignment> {
    hands
        .iter()
        .enumerate()
        .map(|(hand_index, hand)| {
            if !hand.contact.is_object_contact() {
                return Assignment {
                    hand_index,
                    object_index: None,
                    compatibility: 0.0,
                    status: AssignmentStatus::NotInContact,
                };
            }
            let best = candidates
                .iter()
                .enumerate()
                .map(|(j, c)| (j, compatibility_score(hand, c)))
                .fold(None, |best: Option<(usize, f64)>, (j, s)| match best {
                    Some((_, bs)) if bs >= s => best,
                    _ => Some((j, s)),
                });
            match best {
                None => Assignment {
                    hand_index,
                    object_index: None,
                    compatibility: 0.0,
                    status: AssignmentStatus::NoCandidates,
                },
                Some((_, s)) if compatibility_floor.is_some_and(|f| s < f) => Assignment {
                    hand_index,
                    object_index: None,
                    compatibility: s,
                    status: AssignmentStatus::BelowFloor,
                },
                Some((j, s)) => Assignment {
                    hand_index,
                    object_index: Some(j),
                    compatibility: s,
                    status: AssignmentStatus::Assigned,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::decode_hand_to_object;
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn hand(bbox: BBox, rel: [f64; 4], contact: ContactState) -> HandDetection {
        HandDetection {
            bbox,
            score: 0.9,
            side: HandSide::Right,
            contact,
            predicted_rel: HandToObject::try_from(rel).unwrap(),
        }
    }

    #[test]
    fn exact_prediction_scores_one() {
        let h = hand(b(3.0, 4.0, 10.0, 12.0), [0.5, -0.25, 0.1, 0.3], ContactState::Portable);
        let obj = decode_hand_to_object(&h.bbox, &h.predicted_rel);
        let s = compatibility_score(&h, &ObjectCandidate::detected(obj, 0.5));
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_ln2_scores_half() {
        let h = hand(b(0.0, 0.0, 10.0, 10.0), [0.0, 0.0, 0.0, 0.0], ContactState::Portable);
        // dw = ln 2 and nothing else: width doubled.
        let s = compatibility_score(&h, &ObjectCandidate::detected(b(0.0, 0.0, 20.0, 10.0), 0.5));
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nearer_candidate_wins() {
        let h = hand(b(0.0, 0.0, 10.0, 10.0), [1.0, 1.0, 0.0, 0.0], ContactState::Portable);
        let near = compatibility_score(&h, &ObjectCandidate::detected(b(10.0, 10.0, 10.0, 10.0), 0.5));
        let far = compatibility_score(&h, &ObjectCandidate::detected(b(30.0, 10.0, 10.0, 10.0), 0.5));
        assert_eq!(near, 1.0);
        assert!((far - (-2.0f64).exp()).abs() < 1e-15);
        assert!(near > far);
    }

    #[test]
    fn contact_gating() {
        let cands = [ObjectCandidate::detected(b(10.0, 10.0, 10.0, 10.0), 0.9)];
        for state in ContactState::ALL {
            let h = hand(b(0.0, 0.0, 10.0, 10.0), [1.0, 1.0, 0.0, 0.0], state);
            let a = assign_objects(&[h], &cands, None)[0];
            assert_eq!(a.object_index.is_some(), state.is_object_contact());
            if !state.is_object_contact() {
                assert_eq!(a.status, AssignmentStatus::NotInContact);
            }
        }
    }

    #[test]
    fn empty_candidates_flagged() {
        let h = hand(b(0.0, 0.0, 10.0, 10.0), [1.0, 1.0, 0.0, 0.0], ContactState::NonPortable);
        let a = assign_objects(&[h], &[], None)[0];
        assert_eq!(a.object_index, None);
        assert_eq!(a.status, AssignmentStatus::NoCandidates);
    }

    #[test]
    fn floor_rejects_weak_matches() {
        let h = hand(b(0.0, 0.0, 10.0, 10.0), [1.0, 1.0, 0.0, 0.0], ContactState::Portable);
        let cands = [ObjectCandidate::detected(b(30.0, 10.0, 10.0, 10.0), 0.9)];
        let a = assign_objects(&[h], &cands, Some(0.5))[0];
        assert_eq!(a.status, AssignmentStatus::BelowFloor);
        assert_eq!(a.object_index, None);
        assert!(assign_objects(&[h], &cands, Some(0.1))[0].object_index.is_some());
    }

    #[test]
    fn two_hands_three_candidates_match_exhaustive() {
        let hands = [
            hand(b(0.0, 0.0, 10.0, 10.0), [1.0, 1.0, 0.0, 0.0], ContactState::Portable),
            hand(b(40.0, 0.0, 10.0, 10.0), [-1.0, 1.0, 0.0, 0.0], ContactState::NonPortable),
        ];
        let cands = [
            ObjectCandidate::detected(b(10.0, 10.0, 10.0, 10.0), 0.9),
            ObjectCandidate::detected(b(30.0, 10.0, 10.0, 10.0), 0.8),
            ObjectCandidate::detected(b(31.0, 9.0, 12.0, 10.0), 0.7),
        ];
        let got = assign_objects(&hands, &cands, None);
        for (hi, h) in hands.iter().enumerate() {
            // Exhaustive: score every pair from scratch via the raw formula.
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for (ci, c) in cands.iter().enumerate() {
                let rel = [
                    (c.bbox.x - h.bbox.x) / h.bbox.w,
                    (c.bbox.y - h.bbox.y) / h.bbox.h,
                    (c.bbox.w / h.bbox.w).ln(),
                    (c.bbox.h / h.bbox.h).ln(),
                ];
                let d: f64 = rel.iter().zip(h.predicted_rel.to_array()).map(|(a, p)| (a - p).powi(2)).sum();
                let s = (-d.sqrt()).exp();
                if s > best.1 {
                    best = (ci, s);
                }
            }
            assert_eq!(got[hi].object_index, Some(best.0));
            assert!((got[hi].compatibility - best.1).abs() < 1e-12);
        }
        assert_eq!(got[0].object_index, Some(0));
        assert_eq!(got[1].object_index, Some(1));
    }

    #[test]
    fn ties_go_to_lower_index() {
        let h = hand(b(0.0, 0.0, 10.0, 10.0), [1.0, 1.0, 0.0, 0.0], ContactState::Portable);
        let c = ObjectCandidate::detected(b(10.0, 10.0, 10.0, 10.0), 0.9);
        assert_eq!(assign_objects(&[h], &[c, c, c], None)[0].object_index, Some(0));
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50.0f64..50.0, -50.0f64..50.0, 1.0f64..40.0, 1.0f64..40.0).prop_map(|(x, y, w, h)| b(x, y, w, h))
    }

    proptest! {
        #[test]
        fn score_invariant_under_similarity(hb in arb_box(), cb in arb_box(),
                                            rel in prop::array::uniform4(-2.0f64..2.0),
                                            tx in -100.0f64..100.0, ty in -100.0f64..100.0, s in 0.1f64..10.0) {
            let h = hand(hb, rel, ContactState::Portable);
            let c = ObjectCandidate::detected(cb, 0.5);
            let move_box = |bx: BBox| b(bx.x * s + tx, bx.y * s + ty, bx.w * s, bx.h * s);
            let h2 = HandDetection { bbox: move_box(hb), ..h };
            let c2 = ObjectCandidate::detected(move_box(cb), 0.5);
            let (a, z) = (compatibility_score(&h, &c), compatibility_score(&h2, &c2));
            prop_assert!((a - z).abs() <= 1e-9 * a.max(1e-300) + 1e-12);
            prop_assert!(a > 0.0 && a <= 1.0);
        }

        #[test]
        fn argmax_invariant_under_monotone_transform(hb in arb_box(),
                                                      rel in prop::array::uniform4(-2.0f64..2.0),
                                                      cands in prop::collection::vec(arb_box(), 1..8)) {
            let h = hand(hb, rel, ContactState::Portable);
            let cs: Vec<_> = cands.iter().map(|&c| ObjectCandidate::detected(c, 0.5)).collect();
            let got = assign_objects(&[h], &cs, None)[0].object_index.unwrap();
            // Score with -d directly instead of exp(-d).
            let neg_dist: Vec<f64> = cs.iter()
                .map(|c| -h.predicted_rel.distance(&encode_hand_to_object(&h.bbox, &c.bbox)))
                .collect();
            let mut best = 0;
            for (j, &v) in neg_dist.iter().enumerate() {
                if v > neg_dist[best] {
                    best = j;
                }
            }
            // exp can collapse distinct distances into equal scores, in which
            // case both picks must be tied under the original score.
            let sg = compatibility_score(&h, &cs[got]);
            let sb = compatibility_score(&h, &cs[best]);
            prop_assert!(got == best || sg == sb);
        }

        #[test]
        fn output_aligned_with_hands(n in 0usize..6, m in 0usize..6) {
            let hands: Vec<_> = (0..n).map(|i| hand(b(i as f64, 0.0, 5.0, 5.0), [0.0; 4],
                if i % 2 == 0 { ContactState::Portable } else { ContactState::NoContact })).collect();
            let cands: Vec<_> = (0..m).map(|j| ObjectCandidate::detected(b(j as f64 * 3.0, 1.0, 4.0, 4.0), 0.5)).collect();
            let out = assign_objects(&hands, &cands, None);
            prop_assert_eq!(out.len(), n);
            for (i, a) in out.iter().enumerate() {
                prop_assert_eq!(a.hand_index, i);
                if let Some(j) = a.object_index { prop_assert!(j < m); }
            }
        }
    }
}
