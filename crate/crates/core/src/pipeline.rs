//! Per-frame orchestration and the tracking memory.
//!
//! Each frame runs the same fixed sequence:
//!
//! 1. step every live track on the new feature map;
//! 2. pool tracker and detector boxes and run NMS with tracker boxes ranked
//!    ahead of every detector box;
//! 3. assign candidates to hands by compatibility;
//! 4. open a track for each contact hand whose match is a detector box not
//!    already covered by a live track;
//! 5. update miss counters from the hands' contact states and retire tracks
//!    whose hand has let go;
//! 6. emit the frame's result.
//!
//! Tracks are bound to hands by side. When several hands share a side the
//! one closest (by IoU) to the track's last hand box wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, nms_in_order, BBox};
use crate::interaction::{
    assign_objects, AssignmentStatus, CandidateSource, HandDetection, HandSide, ObjectCandidate,
};
use crate::siam::{
    track_step, DecodingHead, FeatureMap, ShapeTrace, TemplateUpdate, TrackerConfig, TrackerState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// IoU above which NMS treats two candidates as the same object.
    pub nms_iou: f64,
    /// Consecutive no-contact frames tolerated before a track is removed.
    pub miss_tolerance: u32,
    /// Hands and objects scoring below this are dropped on input.
    pub min_det_score: f64,
    pub search_factor: f64,
    pub samples_per_axis: usize,
    pub template_update: TemplateUpdate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compatibility_floor: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            nms_iou: 0.5,
            miss_tolerance: 0,
            min_det_score: 0.1,
            search_factor: 2.0,
            samples_per_axis: 2,
            template_update: TemplateUpdate::EveryFrame,
            compatibility_floor: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return bad(format!("nms_iou {} must lie in (0, 1)", self.nms_iou));
        }
        if !(0.0..=1.0).contains(&self.min_det_score) {
            return bad(format!("min_det_score {} must lie in [0, 1]", self.min_det_score));
        }
        if !(self.search_factor >= 1.0 && self.search_factor.is_finite()) {
            return bad(format!("search_factor {} must be >= 1", self.search_factor));
        }
        if self.samples_per_axis == 0 {
            return bad("samples_per_axis must be positive".into());
        }
        if let Some(f) = self.compatibility_floor {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("compatibility_floor {f} must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    pub fn tracker(&self) -> TrackerConfig {
        TrackerConfig {
            search_factor: self.search_factor,
            samples_per_axis: self.samples_per_axis,
            template_update: self.template_update,
        }
    }
}

/// One frame of detector output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameDetections {
    pub frame: u64,
    pub hands: Vec<HandDetection>,
    /// Detector-sourced candidates.
    pub objects: Vec<ObjectCandidate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    pub feature: FeatureMap,
    pub detections: FrameDetections,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEntry {
    pub object_id: u64,
    pub hand_side: HandSide,
    /// Last box of the bound hand, used to tell same-side hands apart.
    pub hand_box: Option<BBox>,
    pub tracker: TrackerState,
    pub last_box: BBox,
    pub confidence: f64,
    pub source: CandidateSource,
    pub age: u32,
    pub misses: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalReason {
    /// Bound hand seen without object contact for too many frames.
    NoContact,
    /// Bound hand took hold of a different, non-overlapping object.
    Switched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryEvent {
    Added { frame: u64, object_id: u64 },
    /// Track snapped back onto a detector box for the same object.
    Reanchored { frame: u64, object_id: u64 },
    Removed { frame: u64, object_id: u64, reason: RemovalReason },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandResult {
    pub detection: HandDetection,
    pub object_id: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectResult {
    pub object_id: u64,
    pub bbox: BBox,
    pub confidence: f64,
    pub source: CandidateSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: u64,
    pub hands: Vec<HandResult>,
    pub objects: Vec<ObjectResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub result: FrameResult,
    pub events: Vec<MemoryEvent>,
    /// Shape chain of every tracker step run this frame.
    pub shapes: Vec<ShapeTrace>,
}

/// The set of live interacting-object tracks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackingMemory {
    pub entries: Vec<TrackEntry>,
    next_id: u64,
}

impl TrackingMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn allocate_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }
}

/// Pool detector and tracker candidates and suppress duplicates, ranking
/// every tracker box ahead of every detector box. Within a source, higher
/// score first, then input order. Survivors come back in priority order.
pub fn merge_candidates(
    detections: &[ObjectCandidate],
    tracked: &[ObjectCandidate],
    iou_threshold: f64,
) -> Vec<ObjectCandidate> {
    let pool: Vec<ObjectCandidate> = tracked.iter().chain(detections).copied().collect();
    let rank = |c: &ObjectCandidate| match c.source {
        CandidateSource::Tracker => 0,
        CandidateSource::Detector => 1,
    };
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        rank(&pool[a])
            .cmp(&rank(&pool[b]))
            .then(pool[b].score.total_cmp(&pool[a].score))
            .then(a.cmp(&b))
    });
    let boxes: Vec<BBox> = pool.iter().map(|c| c.bbox).collect();
    nms_in_order(&boxes, &order, iou_threshold).into_iter().map(|i| pool[i]).collect()
}

pub struct Pipeline {
    config: PipelineConfig,
    head: DecodingHead,
    memory: TrackingMemory,
    pool: Option<rayon::ThreadPool>,
    last_frame: Option<u64>,
}

impl Pipeline {
    /// `threads`: 1 runs tracker steps inline, 0 uses rayon's default pool,
    /// anything else gets a dedicated pool of that size.
    pub fn new(config: PipelineConfig, head: DecodingHead, threads: usize) -> Result<Self> {
        config.validate()?;
        let pool = match threads {
            1 => None,
            n => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            ),
        };
        Ok(Self { config, head, memory: TrackingMemory::new(), pool, last_frame: None })
    }

    pub fn memory(&self) -> &TrackingMemory {
        &self.memory
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn step_frame(&mut self, frame: &Frame) -> Result<FrameOutcome> {
        if frame.detections.frame != frame.index {
            return Err(Error::Sequencing(format!(
                "detections for frame {} supplied with feature frame {}",
                frame.detections.frame, frame.index
            )));
        }
        if let Some(prev) = self.last_frame {
            if frame.index <= prev {
                return Err(Error::Sequencing(format!("frame {} follows frame {prev}", frame.index)));
            }
        }
        let outcome = step_frame(&mut self.memory, &frame.feature, &frame.detections, &self.config, &self.head, self.pool.as_ref())?;
        self.last_frame = Some(frame.index);
        Ok(outcome)
    }

    /// Fold [`Pipeline::step_frame`] over `frames`, handing each outcome to
    /// `sink` as soon as it is ready. Returns the number of frames processed.
    pub fn run_sequence<I, F>(&mut self, frames: I, mut sink: F) -> Result<usize>
    where
        I: IntoIterator<Item = Result<Frame>>,
        F: FnMut(FrameOutcome) -> Result<()>,
    {
        let mut n = 0;
        for frame in frames {
            sink(self.step_frame(&frame?)?)?;
            n += 1;
        }
        Ok(n)
    }
}

/// Convenience wrapper collecting every [`FrameResult`] from a fresh memory.
pub fn run_sequence<I>(frames: I, config: &PipelineConfig, head: &DecodingHead, threads: usize) -> Result<Vec<FrameResult>>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    let mut pipeline = Pipeline::new(config.clone(), head.clone(), threads)?;
    let mut out = Vec::new();
    pipeline.run_sequence(frames, |o| {
        out.push(o.result);
        Ok(())
    })?;
    Ok(out)
}

/// Index of the hand bound to `entry` among `hands`, if any.
fn bound_hand(entry: &TrackEntry, hands: &[HandDetection]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, h) in hands.iter().enumerate() {
        if h.side != entry.hand_side {
            continue;
        }
        let overlap = entry.hand_box.map_or(0.0, |hb| iou(&hb, &h.bbox));
        if best.map_or(true, |(_, o)| overlap > o) {
            best = Some((k, overlap));
        }
    }
    best.map(|(k, _)| k)
}

pub fn step_frame(
    memory: &mut TrackingMemory,
    feature: &FeatureMap,
    detections: &FrameDetections,
    config: &PipelineConfig,
    head: &DecodingHead,
    pool: Option<&rayon::ThreadPool>,
) -> Result<FrameOutcome> {
    let frame = detections.frame;
    let tracker_cfg = config.tracker();
    let mut events = Vec::new();

    // 1. Advance every live track.
    let step = |e: &TrackEntry| track_step(&e.tracker, feature, head, &tracker_cfg);
    let steps: Vec<_> = match pool {
        Some(p) => p.install(|| memory.entries.par_iter().map(step).collect()),
        None => memory.entries.iter().map(step).collect(),
    };
    let mut shapes = Vec::with_capacity(steps.len());
    for (entry, s) in memory.entries.iter_mut().zip(steps) {
        let s = s?;
        shapes.push(s.shapes);
        entry.tracker = s.state;
        entry.last_box = s.bbox;
        entry.confidence = s.confidence;
        entry.source = CandidateSource::Tracker;
        entry.age += 1;
    }

    // 2. Merge with detector boxes, tracker first.
    let hands: Vec<HandDetection> =
        detections.hands.iter().filter(|h| h.score >= config.min_det_score).copied().collect();
    let detected: Vec<ObjectCandidate> = detections
        .objects
        .iter()
        .filter(|o| o.score >= config.min_det_score)
        .map(|o| ObjectCandidate::detected(o.bbox, o.score))
        .collect();
    let tracked: Vec<ObjectCandidate> = memory
        .entries
        .iter()
        .map(|e| ObjectCandidate::tracked(e.last_box, e.confidence, e.object_id))
        .collect();
    let candidates = merge_candidates(&detected, &tracked, config.nms_iou);

    // 3. Associate.
    let assignments = assign_objects(&hands, &candidates, config.compatibility_floor);

    // 4. Link hands to tracks, opening tracks for new objects.
    let bindings: Vec<Option<usize>> = memory.entries.iter().map(|e| bound_hand(e, &hands)).collect();
    let mut confirmed = vec![false; memory.entries.len()];
    let mut fresh = vec![false; memory.entries.len()];
    let mut retired = vec![false; memory.entries.len()];
    let mut links: Vec<Option<u64>> = vec![None; hands.len()];
    let mut added: Vec<TrackEntry> = Vec::new();

    for a in &assignments {
        let (Some(ci), AssignmentStatus::Assigned) = (a.object_index, a.status) else { continue };
        let hand = &hands[a.hand_index];
        let cand = candidates[ci];
        match cand.source {
            CandidateSource::Tracker => {
                let id = cand.object_id.expect("tracker candidates carry an id");
                let k = memory.entries.iter().position(|e| e.object_id == id).expect("tracked id is live");
                confirmed[k] = true;
                if memory.entries[k].hand_side == hand.side {
                    memory.entries[k].hand_box = Some(hand.bbox);
                }
                links[a.hand_index] = Some(id);
            }
            CandidateSource::Detector => {
                // Same object as a live track?
                let covering = memory
                    .entries
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| !retired[*k])
                    .find(|(_, e)| iou(&e.last_box, &cand.bbox) >= config.nms_iou)
                    .map(|(k, _)| k);
                if let Some(k) = covering {
                    confirmed[k] = true;
                    links[a.hand_index] = Some(memory.entries[k].object_id);
                    continue;
                }
                // Same object as this hand's own track, drifted off target?
                let own = (0..memory.entries.len())
                    .find(|&k| !retired[k] && !fresh[k] && bindings[k] == Some(a.hand_index));
                if let Some(k) = own {
                    let entry = &mut memory.entries[k];
                    if iou(&entry.last_box, &cand.bbox) > 0.0 {
                        entry.tracker = TrackerState::init(feature, cand.bbox, entry.object_id, &tracker_cfg)?;
                        entry.last_box = cand.bbox;
                        entry.confidence = cand.score;
                        entry.source = CandidateSource::Detector;
                        entry.hand_box = Some(hand.bbox);
                        confirmed[k] = true;
                        fresh[k] = true;
                        links[a.hand_index] = Some(entry.object_id);
                        events.push(MemoryEvent::Reanchored { frame, object_id: entry.object_id });
                        continue;
                    }
                    retired[k] = true;
                    events.push(MemoryEvent::Removed {
                        frame,
                        object_id: entry.object_id,
                        reason: RemovalReason::Switched,
                    });
                }
                // Two hands may pick the same new detector box.
                if let Some(e) = added.iter().find(|e| e.last_box == cand.bbox) {
                    links[a.hand_index] = Some(e.object_id);
                    continue;
                }
                let object_id = memory.allocate_id();
                added.push(TrackEntry {
                    object_id,
                    hand_side: hand.side,
                    hand_box: Some(hand.bbox),
                    tracker: TrackerState::init(feature, cand.bbox, object_id, &tracker_cfg)?,
                    last_box: cand.bbox,
                    confidence: cand.score,
                    source: CandidateSource::Detector,
                    age: 1,
                    misses: 0,
                });
                links[a.hand_index] = Some(object_id);
                events.push(MemoryEvent::Added { frame, object_id });
            }
        }
    }

    // 5. Contact bookkeeping and removal.
    for (k, entry) in memory.entries.iter_mut().enumerate() {
        if retired[k] {
            continue;
        }
        if confirmed[k] {
            entry.misses = 0;
        } else if let Some(h) = bindings[k] {
            if !hands[h].contact.is_object_contact() {
                entry.misses += 1;
                entry.hand_box = Some(hands[h].bbox);
            }
        }
        if entry.misses > config.miss_tolerance {
            retired[k] = true;
            events.push(MemoryEvent::Removed { frame, object_id: entry.object_id, reason: RemovalReason::NoContact });
        }
    }
    let mut k = 0;
    memory.entries.retain(|_| {
        k += 1;
        !retired[k - 1]
    });
    memory.entries.extend(added);

    // 6. Emit.
    let objects: Vec<ObjectResult> = memory
        .entries
        .iter()
        .map(|e| ObjectResult { object_id: e.object_id, bbox: e.last_box, confidence: e.confidence, source: e.source })
        .collect();
    let hands = hands
        .into_iter()
        .zip(links)
        .map(|(detection, object_id)| HandResult {
            detection,
            object_id: object_id.filter(|id| objects.iter().any(|o| o.object_id == *id)),
        })
        .collect();
    Ok(FrameOutcome { result: FrameResult { frame, hands, objects }, events, shapes })
}
