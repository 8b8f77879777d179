//! Line-delimited JSON records: detections in, annotations and results out.
//!
//! Every file holds one record per line, frames strictly increasing. Unknown
//! fields are ignored so producers can attach extra data.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{GroundTruthFrame, GtHand, PredictedHand, PredictedObject, PredictionRecord};
use crate::geometry::{BBox, HandToObject};
use crate::interaction::{CandidateSource, ContactState, HandDetection, HandSide, ObjectCandidate};
use crate::pipeline::{FrameDetections, FrameResult, HandResult, ObjectResult};

pub trait Framed {
    fn frame(&self) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandRecord {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
    pub side: HandSide,
    pub state: ContactState,
    pub rel: HandToObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: u64,
    #[serde(default)]
    pub hands: Vec<HandRecord>,
    #[serde(default)]
    pub objects: Vec<ObjectRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedHand {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub side: HandSide,
    pub state: ContactState,
    #[serde(default)]
    pub object_box: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub frame: u64,
    pub annotated: bool,
    #[serde(default)]
    pub hands: Vec<AnnotatedHand>,
    #[serde(default)]
    pub scene: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultHand {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
    pub side: HandSide,
    pub state: ContactState,
    pub rel: HandToObject,
    #[serde(default)]
    pub object_id: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultObject {
    pub id: u64,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
    pub source: CandidateSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub frame: u64,
    #[serde(default)]
    pub hands: Vec<ResultHand>,
    #[serde(default)]
    pub objects: Vec<ResultObject>,
}

impl Framed for DetectionRecord {
    fn frame(&self) -> u64 {
        self.frame
    }
}

impl Framed for AnnotationRecord {
    fn frame(&self) -> u64 {
        self.frame
    }
}

impl Framed for ResultRecord {
    fn frame(&self) -> u64 {
        self.frame
    }
}

impl From<&DetectionRecord> for FrameDetections {
    fn from(r: &DetectionRecord) -> Self {
        FrameDetections {
            frame: r.frame,
            hands: r
                .hands
                .iter()
                .map(|h| HandDetection { bbox: h.bbox, score: h.score, side: h.side, contact: h.state, predicted_rel: h.rel })
                .collect(),
            objects: r.objects.iter().map(|o| ObjectCandidate::detected(o.bbox, o.score)).collect(),
        }
    }
}

impl From<&FrameDetections> for DetectionRecord {
    fn from(d: &FrameDetections) -> Self {
        DetectionRecord {
            frame: d.frame,
            hands: d
                .hands
                .iter()
                .map(|h| HandRecord { bbox: h.bbox, score: h.score, side: h.side, state: h.contact, rel: h.predicted_rel })
                .collect(),
            objects: d.objects.iter().map(|o| ObjectRecord { bbox: o.bbox, score: o.score }).collect(),
        }
    }
}

impl From<&AnnotationRecord> for GroundTruthFrame {
    fn from(r: &AnnotationRecord) -> Self {
        GroundTruthFrame {
            frame: r.frame,
            hands: r
                .hands
                .iter()
                .map(|h| GtHand { bbox: h.bbox, side: h.side, contact: h.state, object: h.object_box })
                .collect(),
            scene: r.scene.clone(),
            annotated: r.annotated,
        }
    }
}

impl From<&GroundTruthFrame> for AnnotationRecord {
    fn from(g: &GroundTruthFrame) -> Self {
        AnnotationRecord {
            frame: g.frame,
            annotated: g.annotated,
            hands: g
                .hands
                .iter()
                .map(|h| AnnotatedHand { bbox: h.bbox, side: h.side, state: h.contact, object_box: h.object })
                .collect(),
            scene: g.scene.clone(),
        }
    }
}

impl From<&FrameResult> for ResultRecord {
    fn from(r: &FrameResult) -> Self {
        ResultRecord {
            frame: r.frame,
            hands: r
                .hands
                .iter()
                .map(|HandResult { detection: h, object_id }| ResultHand {
                    bbox: h.bbox,
                    score: h.score,
                    side: h.side,
                    state: h.contact,
                    rel: h.predicted_rel,
                    object_id: *object_id,
                })
                .collect(),
            objects: r
                .objects
                .iter()
                .map(|o: &ObjectResult| ResultObject { id: o.object_id, bbox: o.bbox, confidence: o.confidence, source: o.source })
                .collect(),
        }
    }
}

impl ResultRecord {
    fn linked(&self, id: Option<u64>) -> Option<&ResultObject> {
        id.and_then(|id| self.objects.iter().find(|o| o.id == id))
    }

    pub fn to_prediction(&self) -> PredictionRecord {
        PredictionRecord {
            frame: self.frame,
            hands: self
                .hands
                .iter()
                .map(|h| PredictedHand {
                    bbox: h.bbox,
                    score: h.score,
                    side: h.side,
                    contact: h.state,
                    object: self.linked(h.object_id).map(|o| PredictedObject { bbox: o.bbox, score: o.confidence }),
                })
                .collect(),
        }
    }

    /// Read the results as if they were a fully annotated ground truth.
    pub fn to_ground_truth(&self) -> GroundTruthFrame {
        GroundTruthFrame {
            frame: self.frame,
            hands: self
                .hands
                .iter()
                .map(|h| GtHand {
                    bbox: h.bbox,
                    side: h.side,
                    contact: h.state,
                    object: self.linked(h.object_id).map(|o| o.bbox),
                })
                .collect(),
            scene: String::new(),
            annotated: true,
        }
    }
}

/// Streams records from a line-delimited file, checking that frame indices
/// strictly increase. Blank lines are skipped.
pub struct JsonlReader<R, T> {
    lines: std::io::Lines<R>,
    line: usize,
    last_frame: Option<u64>,
    _marker: PhantomData<T>,
}

impl<R: BufRead, T: DeserializeOwned + Framed> JsonlReader<R, T> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line: 0, last_frame: None, _marker: PhantomData }
    }
}

impl<R: BufRead, T: DeserializeOwned + Framed> Iterator for JsonlReader<R, T> {
    type Item = Result<T>;

    fn next(&mut self) -> Option<Result<T>> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            let record: T = match serde_json::from_str(&text) {
                Ok(r) => r,
                Err(e) => return Some(Err(Error::Parse { line: self.line, message: e.to_string() })),
            };
            if let Some(prev) = self.last_frame {
                if record.frame() <= prev {
                    return Some(Err(Error::Sequencing(format!(
                        "line {}: frame {} does not follow frame {prev}",
                        self.line,
                        record.frame()
                    ))));
                }
            }
            self.last_frame = Some(record.frame());
            return Some(Ok(record));
        }
    }
}

pub struct JsonlWriter<W: Write> {
    out: W,
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record).map_err(|e| Error::Format(e.to_string()))?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn read_detections<R: BufRead>(reader: R) -> impl Iterator<Item = Result<FrameDetections>> {
    JsonlReader::<R, DetectionRecord>::new(reader).map(|r| r.map(|r| FrameDetections::from(&r)))
}

pub fn load_detections(path: &Path) -> Result<Vec<FrameDetections>> {
    read_detections(open(path)?).collect()
}

fn save_all<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<()> {
    let mut w = JsonlWriter::new(BufWriter::new(File::create(path)?));
    for r in records {
        w.write(&r)?;
    }
    w.finish()?;
    Ok(())
}

pub fn save_detections(path: &Path, frames: &[FrameDetections]) -> Result<()> {
    save_all(path, frames.iter().map(DetectionRecord::from))
}

pub fn load_annotations(path: &Path) -> Result<Vec<GroundTruthFrame>> {
    JsonlReader::<_, AnnotationRecord>::new(open(path)?).map(|r| r.map(|r| GroundTruthFrame::from(&r))).collect()
}

pub fn save_annotations(path: &Path, frames: &[GroundTruthFrame]) -> Result<()> {
    save_all(path, frames.iter().map(AnnotationRecord::from))
}

pub fn load_results(path: &Path) -> Result<Vec<ResultRecord>> {
    JsonlReader::<_, ResultRecord>::new(open(path)?).collect()
}

/// Ground truth from either an annotation file or a results file, told
/// apart by the `annotated` key on the first record.
pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthFrame>> {
    let first = open(path)?.lines().find(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty())).transpose()?;
    let is_annotation = first
        .and_then(|l| serde_json::from_str::<serde_json::Value>(&l).ok())
        .is_some_and(|v| v.get("annotated").is_some());
    if is_annotation {
        load_annotations(path)
    } else {
        Ok(load_results(path)?.iter().map(ResultRecord::to_ground_truth).collect())
    }
}
