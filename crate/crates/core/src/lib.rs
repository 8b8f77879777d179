//! Tracking interacting objects in hand-object interaction video.
//!
//! The engine combines a per-frame interaction detector (hands, candidate
//! objects, and a predicted hand-to-object box) with a Siamese matcher that
//! carries each interacting object from frame to frame. Neural feature
//! extraction and detection stay outside the process: features arrive as
//! dense [`tensor::Tensor3`] maps and detections as line-delimited records.
//!
//! Module map:
//! - [`tensor`]: dense tensor, bilinear sampling, ROI align, depth-wise
//!   cross-correlation, conv2d, and the FT1 feature file format.
//! - [`geometry`]: boxes, IoU, hand-to-object encoding, search regions, NMS.
//! - [`interaction`]: compatibility scoring and hand-to-object assignment.
//! - [`siam`]: template/search extraction, response decoding, target selection.
//! - [`losses`]: training objectives with analytic gradients.
//! - [`pipeline`]: the tracking memory and per-frame orchestration.
//! - [`eval`]: AP-based evaluation on annotated frames.
//! - [`io`]: record formats, sequence manifests, providers, synthetic scenes.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod interaction;
pub mod io;
pub mod losses;
pub mod pipeline;
pub mod siam;
pub mod tensor;

pub use error::{Error, Result};
pub use geometry::{BBox, HandToObject};
pub use tensor::Tensor3;
