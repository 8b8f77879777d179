//! Synthetic hand-object sequences with known ground truth.
//!
//! Frames are rendered at stride 1 with three channels: a static zero-mean
//! noise background, textured distractor patches, a textured hand patch and
//! the textured object on top. Detections are derived from the true boxes
//! with optional jitter and dropout; inside occlusion windows the object
//! detection is withheld while the ground truth keeps going.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{GroundTruthFrame, GtHand};
use crate::geometry::{encode_hand_to_object, BBox};
use crate::interaction::{ContactState, HandDetection, HandSide, ObjectCandidate};
use crate::io::manifest::SequenceManifest;
use crate::io::records::{save_annotations, save_detections};
use crate::pipeline::FrameDetections;
use crate::tensor::Tensor3;

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Trajectory {
    Boxes(Vec<BBox>),
    Linear { start: BBox, velocity: [f64; 2] },
}

impl Trajectory {
    fn boxes(&self, frames: usize) -> Result<Vec<BBox>> {
        match self {
            Trajectory::Boxes(b) if b.len() == frames => Ok(b.clone()),
            Trajectory::Boxes(b) => Err(Error::Config(format!("trajectory has {} boxes for {frames} frames", b.len()))),
            Trajectory::Linear { start, velocity } => (0..frames)
                .map(|t| BBox::new(start.x + velocity[0] * t as f64, start.y + velocity[1] * t as f64, start.w, start.h))
                .collect(),
        }
    }
}

/// Contact state for frames `from..=to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactSegment {
    pub from: usize,
    pub to: usize,
    pub state: ContactState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Uniform jitter in pixels applied to every detected box coordinate.
    pub box_jitter: f64,
    /// Probability of losing the object detection outside occlusions.
    pub dropout: f64,
    /// Amplitude of per-frame pixel noise.
    pub pixel_noise: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { box_jitter: 0.0, dropout: 0.0, pixel_noise: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSceneSpec {
    #[serde(default = "default_id")]
    pub sequence_id: String,
    #[serde(default = "default_scene")]
    pub scene: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    pub object: Trajectory,
    pub hand: Trajectory,
    #[serde(default = "default_side")]
    pub hand_side: HandSide,
    #[serde(default = "default_contact")]
    pub default_contact: ContactState,
    #[serde(default)]
    pub contact: Vec<ContactSegment>,
    /// Inclusive frame ranges without object detections.
    #[serde(default)]
    pub occlusions: Vec<[usize; 2]>,
    #[serde(default)]
    pub distractors: Vec<BBox>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_every")]
    pub annotate_every: usize,
}

fn default_id() -> String {
    "synth".into()
}
fn default_scene() -> String {
    "synthetic".into()
}
fn default_side() -> HandSide {
    HandSide::Right
}
fn default_contact() -> ContactState {
    ContactState::Portable
}
fn default_every() -> usize {
    1
}

impl SyntheticSceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }

    pub fn contact_at(&self, frame: usize) -> ContactState {
        self.contact
            .iter()
            .rev()
            .find(|s| (s.from..=s.to).contains(&frame))
            .map_or(self.default_contact, |s| s.state)
    }

    pub fn occluded(&self, frame: usize) -> bool {
        self.occlusions.iter().any(|[a, b]| (*a..=*b).contains(&frame))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub images: Vec<Tensor3>,
    pub detections: Vec<FrameDetections>,
    pub ground_truth: Vec<GroundTruthFrame>,
    /// True object box per frame, annotated or not.
    pub object_boxes: Vec<BBox>,
}

fn texture(rng: &mut ChaCha8Rng, bbox: &BBox, amplitude: f32) -> (usize, usize, Vec<f32>) {
    let (h, w) = (bbox.h.ceil() as usize, bbox.w.ceil() as usize);
    let data = (0..h * w * CHANNELS).map(|_| rng.gen_range(-amplitude..amplitude)).collect();
    (h, w, data)
}

/// Paint `tex` so that its top-left corner sits at the box corner; pixels
/// whose centers fall inside the box take the nearest texel.
fn paint(img: &mut [f32], width: usize, height: usize, bbox: &BBox, tex: &(usize, usize, Vec<f32>)) {
    let (th, tw, data) = tex;
    let x0 = (bbox.x - 0.5).ceil().max(0.0) as usize;
    let y0 = (bbox.y - 0.5).ceil().max(0.0) as usize;
    let x1 = ((bbox.right() - 0.5).ceil().max(0.0) as usize).min(width);
    let y1 = ((bbox.bottom() - 0.5).ceil().max(0.0) as usize).min(height);
    for y in y0..y1 {
        let ty = ((y as f64 + 0.5 - bbox.y).floor() as usize).min(th - 1);
        for x in x0..x1 {
            let tx = ((x as f64 + 0.5 - bbox.x).floor() as usize).min(tw - 1);
            let dst = (y * width + x) * CHANNELS;
            let src = (ty * tw + tx) * CHANNELS;
            img[dst..dst + CHANNELS].copy_from_slice(&data[src..src + CHANNELS]);
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, b: &BBox, amount: f64) -> Result<BBox> {
    if amount <= 0.0 {
        return Ok(*b);
    }
    let mut d = || rng.gen_range(-amount..amount);
    let (dx, dy, dw, dh) = (d(), d(), d(), d());
    BBox::new(b.x + dx, b.y + dy, (b.w + dw).max(1.0), (b.h + dh).max(1.0))
}

pub fn synthesize_sequence(spec: &SyntheticSceneSpec) -> Result<SyntheticSequence> {
    if spec.frames == 0 || spec.width == 0 || spec.height == 0 {
        return Err(Error::Config("synthetic spec needs positive frames and image dims".into()));
    }
    if spec.annotate_every == 0 {
        return Err(Error::Config("annotate_every must be positive".into()));
    }
    let objects = spec.object.boxes(spec.frames)?;
    let hands = spec.hand.boxes(spec.frames)?;
    let (iw, ih) = (spec.width as f64, spec.height as f64);
    let inside = |b: &BBox| b.x >= 0.0 && b.y >= 0.0 && b.right() <= iw && b.bottom() <= ih;
    for (t, b) in objects.iter().chain(&hands).chain(&spec.distractors).enumerate() {
        if !inside(b) {
            return Err(Error::Config(format!("box {:?} (entry {t}) leaves the {iw}x{ih} image", b.to_array())));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background: Vec<f32> = (0..spec.width * spec.height * CHANNELS).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let object_tex = texture(&mut rng, &objects[0], 1.0);
    let hand_tex = texture(&mut rng, &hands[0], 1.0);
    let distractor_tex: Vec<_> = spec.distractors.iter().map(|d| texture(&mut rng, d, 1.0)).collect();

    let mut images = Vec::with_capacity(spec.frames);
    let mut detections = Vec::with_capacity(spec.frames);
    let mut ground_truth = Vec::with_capacity(spec.frames);
    let pixel_noise = spec.noise.pixel_noise as f32;
    for t in 0..spec.frames {
        let mut img = background.clone();
        if pixel_noise > 0.0 {
            img.iter_mut().for_each(|v| *v += rng.gen_range(-pixel_noise..pixel_noise));
        }
        for (d, tex) in spec.distractors.iter().zip(&distractor_tex) {
            paint(&mut img, spec.width, spec.height, d, tex);
        }
        paint(&mut img, spec.width, spec.height, &hands[t], &hand_tex);
        paint(&mut img, spec.width, spec.height, &objects[t], &object_tex);
        images.push(Tensor3::new(spec.height, spec.width, CHANNELS, img)?);

        let contact = spec.contact_at(t);
        let hand_box = jitter(&mut rng, &hands[t], spec.noise.box_jitter)?;
        let hand = HandDetection {
            bbox: hand_box,
            score: 0.95,
            side: spec.hand_side,
            contact,
            predicted_rel: encode_hand_to_object(&hand_box, &objects[t]),
        };
        let mut objs = Vec::new();
        let dropped = spec.noise.dropout > 0.0 && rng.gen_bool(spec.noise.dropout.min(1.0));
        if !spec.occluded(t) && !dropped {
            objs.push(ObjectCandidate::detected(jitter(&mut rng, &objects[t], spec.noise.box_jitter)?, 0.9));
        }
        for d in &spec.distractors {
            objs.push(ObjectCandidate::detected(jitter(&mut rng, d, spec.noise.box_jitter)?, 0.8));
        }
        detections.push(FrameDetections { frame: t as u64, hands: vec![hand], objects: objs });

        ground_truth.push(GroundTruthFrame {
            frame: t as u64,
            hands: vec![GtHand {
                bbox: hands[t],
                side: spec.hand_side,
                contact,
                object: contact.is_object_contact().then_some(objects[t]),
            }],
            scene: spec.scene.clone(),
            annotated: t % spec.annotate_every == 0,
        });
    }
    Ok(SyntheticSequence { images, detections, ground_truth, object_boxes: objects })
}

impl SyntheticSequence {
    /// Write FT1 features, detections, annotations and a manifest into `dir`.
    pub fn write_to_dir(&self, spec: &SyntheticSceneSpec, dir: &Path) -> Result<SequenceManifest> {
        std::fs::create_dir_all(dir.join("features"))?;
        let mut features = Vec::with_capacity(self.images.len());
        for (t, img) in self.images.iter().enumerate() {
            let rel = Path::new("features").join(format!("{t:05}.ft1"));
            img.write_ft1(BufWriter::new(File::create(dir.join(&rel))?))?;
            features.push(rel);
        }
        save_detections(&dir.join("detections.jsonl"), &self.detections)?;
        save_annotations(&dir.join("annotations.jsonl"), &self.ground_truth)?;
        let manifest = SequenceManifest {
            sequence_id: spec.sequence_id.clone(),
            frames: self.images.len(),
            image_width: spec.width as f64,
            image_height: spec.height as f64,
            stride: 1.0,
            features,
            feature_command: None,
            detections: "detections.jsonl".into(),
            annotations: Some("annotations.jsonl".into()),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(manifest)
    }
}
