use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use prosody_core::synthetic::write_corpus;

fn prosody(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prosody"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = prosody(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: PathBuf,
    features: PathBuf,
    split: PathBuf,
}

/// Corpus of 6 speakers × 6 pairs, extracted and split once for all tests.
fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let manifest = write_corpus(&root, 6, 6, 16000).unwrap();
        let features = root.join("features.csv");
        ok(&["extract", "--manifest", s(&manifest), "--audio-root", s(&root), "--out", s(&features)]);
        let split = root.join("split.csv");
        ok(&["split", "--manifest", s(&manifest), "--test-fraction", "0.34", "--seed", "3", "--out", s(&split)]);
        Fixture {
            _dir: dir,
            root,
            manifest,
            features,
            split,
        }
    })
}

#[test]
fn extract_is_byte_identical_across_runs_and_jobs() {
    let f = fixture();
    let again = f.root.join("again.csv");
    ok(&["extract", "--manifest", s(&f.manifest), "--audio-root", s(&f.root), "--out", s(&again), "--jobs", "1"]);
    assert_eq!(std::fs::read(&f.features).unwrap(), std::fs::read(&again).unwrap());

    let text = std::fs::read_to_string(&f.features).unwrap();
    assert_eq!(text.lines().count(), 1 + 72);
    assert!(text.lines().nth(1).unwrap().starts_with("EN_00_00,EN_c00_S00_ch0,"));
}

#[test]
fn frame_dump() {
    let f = fixture();
    let frames = f.root.join("frames");
    let out = f.root.join("dumped.csv");
    ok(&[
        "extract", "--manifest", s(&f.manifest), "--audio-root", s(&f.root), "--out", s(&out),
        "--dump-frames", s(&frames),
    ]);
    let dump = std::fs::read_to_string(frames.join("ES_c02_S02_ch0.csv")).unwrap();
    assert!(dump.starts_with("frame_idx,t_s,f0_hz,voicing,log_energy,spectral_flux,cpps_raw,envelope_rate\n"));
    assert_eq!(std::fs::read_dir(&frames).unwrap().count(), 12);
}

#[test]
fn distance_and_neighbors() {
    let f = fixture();
    let d: f64 = ok(&["distance", "--features", s(&f.features), "--a", "EN_00_00", "--b", "ES_00_00"])
        .trim()
        .parse()
        .unwrap();
    let back: f64 = ok(&["distance", "--features", s(&f.features), "--a", "ES_00_00", "--b", "EN_00_00"])
        .trim()
        .parse()
        .unwrap();
    assert!(d > 0.0);
    assert_eq!(d, back);

    let table = ok(&["neighbors", "--features", s(&f.features), "--anchor", "EN_01_02", "--k", "4"]);
    let rows: Vec<&str> = table.lines().filter(|l| l.starts_with("EN_") || l.starts_with("ES_")).collect();
    assert_eq!(rows.len(), 8, "{table}");
    assert!(rows.iter().all(|r| r.starts_with("EN_") && !r.starts_with("EN_01_02")));

    let cross = ok(&["neighbors", "--features", s(&f.features), "--anchor", "EN_01_02", "--cross-language"]);
    assert_eq!(cross.lines().filter(|l| l.starts_with("ES_")).count(), 8);
}

#[test]
fn naive_symmetry_end_to_end() {
    let f = fixture();
    let run = |dir: &str| {
        ok(&[
            "evaluate", "--naive", "--features", s(&f.features), "--split", s(&f.split),
            "--manifest", s(&f.manifest), "--direction", dir,
        ])
    };
    let avg = |text: &str| {
        text.lines()
            .find(|l| l.starts_with("average error"))
            .unwrap()
            .split_whitespace()
            .last()
            .unwrap()
            .to_string()
    };
    assert_eq!(avg(&run("en-es")), avg(&run("es-en")));
}

#[test]
fn fit_evaluate_inspect() {
    let f = fixture();
    let model = f.root.join("model.json");
    ok(&[
        "fit", "--features", s(&f.features), "--split", s(&f.split), "--manifest", s(&f.manifest),
        "--direction", "en-es", "--ridge", "1.0", "--out", s(&model),
    ]);
    let errors = f.root.join("errors.csv");
    let report = ok(&[
        "evaluate", "--model", s(&model), "--features", s(&f.features), "--split", s(&f.split),
        "--manifest", s(&f.manifest), "--direction", "en-es", "--out", s(&errors),
    ]);
    assert!(report.contains("linear"), "{report}");
    assert!(std::fs::read_to_string(&errors).unwrap().starts_with("pair_id,error\n"));

    let top = ok(&["inspect", "--model", s(&model), "--top", "5"]);
    assert_eq!(top.lines().count(), 5);
    assert!(top.lines().all(|l| l.starts_with("EN ") && l.contains(" → ES ")));

    // A model only applies in the direction it was fitted for.
    let out = prosody(&[
        "evaluate", "--model", s(&model), "--features", s(&f.features), "--split", s(&f.split),
        "--manifest", s(&f.manifest), "--direction", "es-en",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn correlate_writes_matrix() {
    let f = fixture();
    let out = f.root.join("rho.csv");
    let summary = ok(&["correlate", "--features", s(&f.features), "--manifest", s(&f.manifest), "--cross", "--out", s(&out)]);
    assert!(summary.contains("EN vs ES over 36 pairs"), "{summary}");
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 101);
    let again = f.root.join("rho2.csv");
    ok(&["correlate", "--features", s(&f.features), "--manifest", s(&f.manifest), "--cross", "--out", s(&again)]);
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn synthesized_audio_evaluation() {
    let f = fixture();
    // Synthesized audio: the reference ES utterances cut out of their tracks.
    let synth = f.root.join("synth");
    std::fs::create_dir_all(&synth).unwrap();
    let manifest = prosody_core::corpus::load_manifest(&f.manifest, true).unwrap();
    for rec in manifest.records.iter().filter(|r| r.utterance_id.starts_with("ES_")) {
        let track = prosody_core::corpus::read_track(f.root.join(&rec.audio_path), 0).unwrap();
        let range = prosody_core::corpus::slice_utterance(&track, rec).unwrap();
        prosody_core::corpus::write_wav_i16(
            synth.join(format!("{}.wav", rec.utterance_id)),
            &track.samples[range],
            track.sample_rate,
        )
        .unwrap();
    }
    let args = |extra: &[&'static str]| {
        let mut v = vec![
            "evaluate".to_string(), "--synth-dir".into(), s(&synth).into(), "--features".into(),
            s(&f.features).into(), "--split".into(), s(&f.split).into(), "--manifest".into(),
            s(&f.manifest).into(), "--direction".into(), "en-es".into(),
        ];
        v.extend(extra.iter().map(|e| e.to_string()));
        v
    };
    let run = |extra: &[&'static str]| {
        let a = args(extra);
        prosody(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let out = run(&[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("synthesizer"), "{text}");

    let split = std::fs::read_to_string(&f.split).unwrap();
    let test_pair = split.lines().find(|l| l.ends_with(",test")).unwrap().split(',').next().unwrap();
    let id = format!("ES_{test_pair}");
    let missing = synth.join(format!("{id}.wav"));
    let moved = f.root.join("moved.wav");
    std::fs::rename(&missing, &moved).unwrap();
    let failed = run(&[]);
    let exclude = f.root.join("exclude.txt");
    std::fs::write(&exclude, format!("{id}\n")).unwrap();
    let mut excluded = args(&[]);
    excluded.extend(["--exclude".to_string(), s(&exclude).to_string()]);
    let excluded = prosody(&excluded.iter().map(String::as_str).collect::<Vec<_>>());
    std::fs::rename(&moved, &missing).unwrap();

    assert_eq!(failed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&failed.stderr).contains(&id));
    assert!(excluded.status.success(), "{}", String::from_utf8_lossy(&excluded.stderr));
}

#[test]
fn exit_codes() {
    assert_eq!(prosody(&[]).status.code(), Some(1));
    assert_eq!(prosody(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(prosody(&["distance", "--features", "x.csv", "--a", "A", "--b", "B", "--bogus"]).status.code(), Some(1));
    assert_eq!(prosody(&["distance", "--features", "/nonexistent.csv", "--a", "A", "--b", "B"]).status.code(), Some(2));
    assert_eq!(prosody(&["evaluate", "--features", "f", "--split", "s", "--manifest", "m", "--direction", "en-es"]).status.code(), Some(1));
    assert_eq!(prosody(&["fit", "--features", "f", "--split", "s", "--manifest", "m", "--direction", "en-fr", "--out", "o"]).status.code(), Some(1));
    assert_eq!(prosody(&["--help"]).status.code(), Some(0));
    assert_eq!(prosody(&["split", "--help"]).status.code(), Some(0));
}

#[test]
fn unsatisfiable_split_exits_3() {
    // Every pair crosses speakers, so any split shares more than one speaker.
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.csv");
    let mut text = String::from("utterance_id,pair_id,language,speaker_id,conversation_id,audio_path,channel,start_s,end_s\n");
    let names = ["A", "B", "C", "D"];
    let mut k = 0;
    for (i, x) in names.iter().enumerate() {
        for y in &names[i + 1..] {
            for _ in 0..3 {
                text += &format!("EN_{k},p{k},EN,{x},c,a.wav,0,0,1\nES_{k},p{k},ES,{y},c,b.wav,0,0,1\n");
                k += 1;
            }
        }
    }
    std::fs::write(&manifest, text).unwrap();
    let out = prosody(&["split", "--manifest", s(&manifest), "--test-fraction", "0.5", "--seed", "1", "--out", s(&dir.path().join("o.csv"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
