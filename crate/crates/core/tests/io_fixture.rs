use std::path::Path;

use tio_core::interaction::{CandidateSource, ContactState, HandSide};
use tio_core::io::{load_detections, save_detections};
use tio_core::{BBox, HandToObject};

fn fixture() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/detections.jsonl")
}

fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
    BBox::new(x, y, w, h).unwrap()
}

#[test]
fn reference_fixture_parses_to_known_records() {
    let frames = load_detections(&fixture()).unwrap();
    assert_eq!(frames.iter().map(|f| f.frame).collect::<Vec<_>>(), vec![0, 1, 3, 4]);

    let f0 = &frames[0];
    assert_eq!(f0.hands.len(), 1);
    assert_eq!(f0.hands[0].bbox, b(12.0, 40.0, 20.0, 20.0));
    assert_eq!(f0.hands[0].score, 0.95);
    assert_eq!(f0.hands[0].side, HandSide::Right);
    assert_eq!(f0.hands[0].contact, ContactState::Portable);
    let rel = HandToObject::new(1.7, -0.1, 0.18232155679395462, 0.18232155679395462).unwrap();
    assert_eq!(f0.hands[0].predicted_rel, rel);
    assert_eq!(f0.objects.iter().map(|o| (o.bbox, o.score)).collect::<Vec<_>>(), vec![
        (b(40.0, 40.0, 24.0, 24.0), 0.9),
        (b(118.0, 12.0, 20.0, 20.0), 0.8),
    ]);
    assert!(f0.objects.iter().all(|o| o.source == CandidateSource::Detector && o.object_id.is_none()));

    let f1 = &frames[1];
    assert_eq!(f1.hands.len(), 2);
    assert_eq!(f1.hands[1].side, HandSide::Left);
    assert_eq!(f1.hands[1].contact, ContactState::NoContact);
    assert_eq!(f1.hands[1].bbox, b(90.0, 70.0, 18.0, 22.0));
    assert_eq!(f1.objects.len(), 1);

    assert!(frames[2].hands.is_empty() && frames[2].objects.is_empty());
    assert_eq!(frames[3].hands[0].contact, ContactState::SelfContact);
    assert!(frames[3].objects.is_empty());
}

#[test]
fn fixture_round_trips_through_save() {
    let frames = load_detections(&fixture()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.jsonl");
    save_detections(&path, &frames).unwrap();
    assert_eq!(load_detections(&path).unwrap(), frames);
    // A second save is byte-identical.
    let again = dir.path().join("again.jsonl");
    save_detections(&again, &load_detections(&path).unwrap()).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}
