//! Corpus ingestion: the utterance manifest, WAV tracks and matched EN/ES pairs.
//!
//! A manifest is a UTF-8 CSV with the header
//! `utterance_id,pair_id,language,speaker_id,conversation_id,audio_path,channel,start_s,end_s`.
//! Audio paths are relative to an audio root supplied by the caller.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ProsodyError, Result};

/// Shortest accepted utterance, in seconds.
pub const MIN_UTTERANCE_S: f64 = 0.5;

pub const MANIFEST_HEADER: [&str; 9] = [
    "utterance_id",
    "pair_id",
    "language",
    "speaker_id",
    "conversation_id",
    "audio_path",
    "channel",
    "start_s",
    "end_s",
];

pub const MIN_SAMPLE_RATE: u32 = 16_000;
pub const MAX_SAMPLE_RATE: u32 = 48_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "EN")]
    En,
    #[serde(rename = "ES")]
    Es,
}

impl Language {
    pub fn code(self) -> &'static str {
        match self {
            Language::En => "EN",
            Language::Es => "ES",
        }
    }

    pub fn other(self) -> Language {
        match self {
            Language::En => Language::Es,
            Language::Es => Language::En,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = ProsodyError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EN" => Ok(Language::En),
            "ES" => Ok(Language::Es),
            other => Err(ProsodyError::InvalidArgument(format!(
                "unknown language {other:?} (expected EN or ES)"
            ))),
        }
    }
}

/// One short, single-speaker utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub pair_id: String,
    pub language: Language,
    pub speaker_id: String,
    pub conversation_id: String,
    pub audio_path: PathBuf,
    pub channel: usize,
    pub start_s: f64,
    pub end_s: f64,
}

impl UtteranceRecord {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn track_key(&self) -> TrackKey {
        TrackKey {
            language: self.language,
            conversation_id: self.conversation_id.clone(),
            speaker_id: self.speaker_id.clone(),
            channel: self.channel,
        }
    }

    pub fn track_id(&self) -> String {
        self.track_key().to_string()
    }
}

/// Identifies one speaker's channel in one conversation, the unit of normalization.
///
/// The original and the re-enactment of a conversation are separate recordings,
/// so the language is part of the key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrackKey {
    pub language: Language,
    pub conversation_id: String,
    pub speaker_id: String,
    pub channel: usize,
}

impl fmt::Display for TrackKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}_{}_{}_ch{}",
            self.language, self.conversation_id, self.speaker_id, self.channel
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub pair_id: String,
    pub en: UtteranceRecord,
    pub es: UtteranceRecord,
}

impl MatchedPair {
    pub fn side(&self, language: Language) -> &UtteranceRecord {
        match language {
            Language::En => &self.en,
            Language::Es => &self.es,
        }
    }

    /// Distinct speakers of the pair, sorted.
    pub fn speakers(&self) -> Vec<&str> {
        let mut s = vec![self.en.speaker_id.as_str(), self.es.speaker_id.as_str()];
        s.sort_unstable();
        s.dedup();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusStats {
    pub utterances: usize,
    pub pairs: usize,
    pub speakers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<UtteranceRecord>,
    pub pairs: Vec<MatchedPair>,
    pub stats: CorpusStats,
}

impl CorpusManifest {
    /// Builds and validates a manifest from records in file order.
    pub fn from_records(records: Vec<UtteranceRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for rec in &records {
            validate_record(rec)?;
            if !seen.insert(rec.utterance_id.as_str()) {
                return Err(ProsodyError::DuplicateUtterance(rec.utterance_id.clone()));
            }
        }

        let mut order: Vec<&str> = Vec::new();
        let mut groups: HashMap<&str, Vec<&UtteranceRecord>> = HashMap::new();
        for rec in &records {
            let entry = groups.entry(rec.pair_id.as_str()).or_default();
            if entry.is_empty() {
                order.push(rec.pair_id.as_str());
            }
            entry.push(rec);
        }

        let mut pairs = Vec::with_capacity(order.len());
        for pair_id in order {
            let members = &groups[pair_id];
            let invalid = |message: String| ProsodyError::InvalidPair {
                pair_id: pair_id.to_string(),
                message,
            };
            if members.len() != 2 {
                return Err(invalid(format!(
                    "expected 2 members, found {}",
                    members.len()
                )));
            }
            let (en, es) = match (members[0].language, members[1].language) {
                (Language::En, Language::Es) => (members[0], members[1]),
                (Language::Es, Language::En) => (members[1], members[0]),
                (l, _) => return Err(invalid(format!("both members are {l}"))),
            };
            pairs.push(MatchedPair {
                pair_id: pair_id.to_string(),
                en: en.clone(),
                es: es.clone(),
            });
        }

        // A track is one file channel; its utterances must agree on the file.
        let mut track_paths: HashMap<TrackKey, &Path> = HashMap::new();
        for rec in &records {
            let path = track_paths
                .entry(rec.track_key())
                .or_insert(rec.audio_path.as_path());
            if *path != rec.audio_path.as_path() {
                return Err(ProsodyError::InvalidArgument(format!(
                    "utterance {} references {} but track {} uses {}",
                    rec.utterance_id,
                    rec.audio_path.display(),
                    rec.track_id(),
                    path.display()
                )));
            }
        }

        let speakers: HashSet<&str> = records.iter().map(|r| r.speaker_id.as_str()).collect();
        let stats = CorpusStats {
            utterances: records.len(),
            pairs: pairs.len(),
            speakers: speakers.len(),
        };
        Ok(Self {
            records,
            pairs,
            stats,
        })
    }

    pub fn record(&self, utterance_id: &str) -> Option<&UtteranceRecord> {
        self.records.iter().find(|r| r.utterance_id == utterance_id)
    }

    /// Records grouped by track, groups ordered by first appearance.
    pub fn tracks(&self) -> Vec<(TrackKey, Vec<&UtteranceRecord>)> {
        let mut index: HashMap<TrackKey, usize> = HashMap::new();
        let mut out: Vec<(TrackKey, Vec<&UtteranceRecord>)> = Vec::new();
        for rec in &self.records {
            let key = rec.track_key();
            match index.get(&key) {
                Some(&i) => out[i].1.push(rec),
                None => {
                    index.insert(key.clone(), out.len());
                    out.push((key, vec![rec]));
                }
            }
        }
        out
    }
}

fn validate_record(rec: &UtteranceRecord) -> Result<()> {
    let bad = |message: String| {
        ProsodyError::InvalidArgument(format!("utterance {}: {message}", rec.utterance_id))
    };
    if rec.utterance_id.is_empty() || rec.pair_id.is_empty() {
        return Err(bad("empty utterance_id or pair_id".into()));
    }
    let prefix = rec.utterance_id.split('_').next().unwrap_or("");
    if !prefix.eq_ignore_ascii_case(rec.language.code()) {
        return Err(bad(format!(
            "id prefix {prefix:?} does not match language {}",
            rec.language
        )));
    }
    if !(rec.start_s.is_finite() && rec.end_s.is_finite()) || rec.start_s < 0.0 {
        return Err(bad(format!(
            "invalid times [{}, {})",
            rec.start_s, rec.end_s
        )));
    }
    if rec.end_s <= rec.start_s {
        return Err(bad(format!(
            "end_s {} is not after start_s {}",
            rec.end_s, rec.start_s
        )));
    }
    check_duration(rec)
}

fn check_duration(rec: &UtteranceRecord) -> Result<()> {
    // Small slack so that 0.5 s written as decimal text is not rejected by rounding.
    if rec.duration_s() < MIN_UTTERANCE_S - 1e-9 {
        return Err(ProsodyError::UtteranceTooShort {
            utterance_id: rec.utterance_id.clone(),
            duration_s: rec.duration_s(),
        });
    }
    Ok(())
}

/// Loads and validates a manifest CSV.
///
/// With `strict` set, an utterance shorter than [`MIN_UTTERANCE_S`] fails the
/// whole load. Otherwise the row and its pair partner are dropped with a warning.
pub fn load_manifest(path: impl AsRef<Path>, strict: bool) -> Result<CorpusManifest> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| ProsodyError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| ProsodyError::csv(path, e))?
        .clone();
    if headers.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(ProsodyError::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "header must be exactly {:?}, found {:?}",
                MANIFEST_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut records = Vec::new();
    for row in reader.deserialize::<UtteranceRecord>() {
        let rec = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            ProsodyError::MalformedRow {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            }
        })?;
        records.push(rec);
    }

    if !strict {
        let mut dropped_pairs = HashSet::new();
        for rec in &records {
            if let Err(e) = check_duration(rec) {
                log::warn!("{e}; dropping pair {}", rec.pair_id);
                dropped_pairs.insert(rec.pair_id.clone());
            }
        }
        if !dropped_pairs.is_empty() {
            records.retain(|r| !dropped_pairs.contains(&r.pair_id));
        }
    }

    CorpusManifest::from_records(records)
}

/// One channel of audio for one speaker in one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioTrack {
    pub track_id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioTrack {
    pub fn new(track_id: impl Into<String>, samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            track_id: track_id.into(),
            samples,
            sample_rate,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Copy of the track with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            track_id: self.track_id.clone(),
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Reads one channel of a PCM WAV file (16-bit integer or 32-bit float).
pub fn read_track(audio_path: impl AsRef<Path>, channel: usize) -> Result<AudioTrack> {
    let path = audio_path.as_ref();
    let wav_err = |source| ProsodyError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => ProsodyError::io(path, io),
        hound::Error::Unsupported | hound::Error::FormatError(_) => {
            ProsodyError::UnsupportedEncoding {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        }
        other => wav_err(other),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channel >= channels {
        return Err(ProsodyError::ChannelOutOfRange {
            path: path.to_path_buf(),
            channel,
            channels,
        });
    }
    if !(MIN_SAMPLE_RATE..=MAX_SAMPLE_RATE).contains(&spec.sample_rate) {
        return Err(ProsodyError::UnsupportedEncoding {
            path: path.to_path_buf(),
            message: format!(
                "sample rate {} Hz outside {MIN_SAMPLE_RATE}-{MAX_SAMPLE_RATE} Hz",
                spec.sample_rate
            ),
        });
    }

    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .skip(channel)
            .step_by(channels)
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .skip(channel)
            .step_by(channels)
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (format, bits) => {
            return Err(ProsodyError::UnsupportedEncoding {
                path: path.to_path_buf(),
                message: format!("{bits}-bit {format:?} samples"),
            })
        }
    };
    if samples.is_empty() {
        return Err(ProsodyError::EmptyAudio {
            path: path.to_path_buf(),
        });
    }

    Ok(AudioTrack {
        track_id: path.display().to_string(),
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Writes mono 16-bit PCM. Samples are clipped to [-1, 1].
pub fn write_wav_i16(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |source| ProsodyError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

/// Half-open sample interval `[round(start_s * rate), round(end_s * rate))`.
pub fn slice_utterance(track: &AudioTrack, rec: &UtteranceRecord) -> Result<Range<usize>> {
    let rate = track.sample_rate as f64;
    let start = (rec.start_s * rate).round();
    let end = (rec.end_s * rate).round();
    if start < 0.0 || end > track.samples.len() as f64 || end <= start {
        return Err(ProsodyError::IntervalOutOfRange {
            utterance_id: rec.utterance_id.clone(),
            start_s: rec.start_s,
            end_s: rec.end_s,
            track_s: track.duration_s(),
        });
    }
    Ok(start as usize..end as usize)
}
