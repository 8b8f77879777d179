//! File formats, feature providers and synthetic sequences.

pub mod manifest;
pub mod provider;
pub mod records;
pub mod synth;

pub use manifest::SequenceManifest;
pub use provider::{ExternalProvider, FeatureProvider, Ft1Provider, ImageGeometry, InMemoryProvider};
pub use records::{
    load_annotations, load_detections, load_ground_truth, load_results, read_detections, save_annotations,
    save_detections, AnnotationRecord, DetectionRecord, JsonlReader, JsonlWriter, ResultRecord,
};
pub use synth::{synthesize_sequence, SyntheticSceneSpec, SyntheticSequence};
