use prosody_core::corpus::{load_manifest, read_track};
use prosody_core::midlevel::{read_features, write_features};
use prosody_core::models::{split_pairs, Direction};
use prosody_core::pipeline::{extract_corpus, track_raw_vectors, ExtractOptions};
use prosody_core::synthetic::write_corpus;
use prosody_core::ProsodyError;

#[test]
fn extraction_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = load_manifest(write_corpus(dir.path(), 2, 3, 22050).unwrap(), true).unwrap();
    let vectors = extract_corpus(&manifest, dir.path(), &ExtractOptions::default()).unwrap();
    assert_eq!(vectors.len(), 12);
    let ids: Vec<&str> = vectors.iter().map(|v| v.utterance_id.as_str()).collect();
    let expected: Vec<&str> = manifest.records.iter().map(|r| r.utterance_id.as_str()).collect();
    assert_eq!(ids, expected);

    let path = dir.path().join("features.csv");
    write_features(&path, &vectors).unwrap();
    let table = read_features(&path).unwrap();
    assert_eq!(table.vectors(), &vectors[..]);
}

#[test]
fn interval_past_track_end_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = load_manifest(write_corpus(dir.path(), 1, 2, 16000).unwrap(), true).unwrap();
    let (_, records) = &manifest.tracks()[0];
    let track = read_track(dir.path().join(&records[0].audio_path), 0).unwrap();
    let mut late = records[1].clone();
    late.start_s += 10.0;
    late.end_s += 10.0;
    assert!(matches!(
        track_raw_vectors(&track, &[&late]),
        Err(ProsodyError::IntervalOutOfRange { .. })
    ));
}

#[test]
fn missing_audio_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = load_manifest(write_corpus(dir.path(), 1, 2, 16000).unwrap(), true).unwrap();
    std::fs::remove_file(dir.path().join("ES_c00.wav")).unwrap();
    let err = extract_corpus(&manifest, dir.path(), &ExtractOptions::default()).unwrap_err();
    assert!(!err.is_constraint_failure());
}

#[test]
fn synthetic_corpus_splits_by_speaker() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = load_manifest(write_corpus(dir.path(), 5, 2, 16000).unwrap(), true).unwrap();
    let split = split_pairs(&manifest.pairs, 0.2, 11).unwrap();
    assert_eq!(split.test.len(), 2);
    assert!(split.shared_speakers.is_empty());
    assert_eq!(Direction::EnEs.target(), prosody_core::Language::Es);
}
