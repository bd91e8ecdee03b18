//! The 100-dimensional utterance prosody representation.
//!
//! Ten base features are each averaged over ten spans at fixed fractions of
//! the utterance's duration; the resulting raw vectors are then z-normalized
//! per dimension across all utterances of the same track.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::corpus::{Language, UtteranceRecord, MIN_UTTERANCE_S};
use crate::dsp::{frame_center_s, percentile, zscore_moments, Moments, NormalizedFrameSeries};
use crate::error::{ProsodyError, Result};

pub const N_FEATURES: usize = 10;
pub const N_SPANS: usize = 10;
pub const DIM: usize = N_FEATURES * N_SPANS;

/// Span edges as fractions of the utterance duration. The last span is closed.
pub const SPAN_EDGES: [f64; N_SPANS + 1] =
    [0.0, 0.05, 0.10, 0.20, 0.30, 0.50, 0.70, 0.80, 0.90, 0.95, 1.0];
const SPAN_PERCENT: [u32; N_SPANS + 1] = [0, 5, 10, 20, 30, 50, 70, 80, 90, 95, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseFeature {
    Intensity = 0,
    Lengthening = 1,
    Creakiness = 2,
    SpeakingRate = 3,
    PitchHighness = 4,
    PitchLowness = 5,
    PitchWideness = 6,
    PitchNarrowness = 7,
    PeakDisalignment = 8,
    Cpps = 9,
}

impl BaseFeature {
    pub const ALL: [BaseFeature; N_FEATURES] = [
        BaseFeature::Intensity,
        BaseFeature::Lengthening,
        BaseFeature::Creakiness,
        BaseFeature::SpeakingRate,
        BaseFeature::PitchHighness,
        BaseFeature::PitchLowness,
        BaseFeature::PitchWideness,
        BaseFeature::PitchNarrowness,
        BaseFeature::PeakDisalignment,
        BaseFeature::Cpps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseFeature::Intensity => "intensity",
            BaseFeature::Lengthening => "lengthening",
            BaseFeature::Creakiness => "creakiness",
            BaseFeature::SpeakingRate => "speaking_rate",
            BaseFeature::PitchHighness => "pitch_highness",
            BaseFeature::PitchLowness => "pitch_lowness",
            BaseFeature::PitchWideness => "pitch_wideness",
            BaseFeature::PitchNarrowness => "pitch_narrowness",
            BaseFeature::PeakDisalignment => "peak_disalignment",
            BaseFeature::Cpps => "cpps",
        }
    }

    /// Index of this feature over `span` in a prosody vector.
    pub fn index(self, span: usize) -> usize {
        self as usize * N_SPANS + span
    }
}

impl fmt::Display for BaseFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Canonical label `<feature>_p<lo>_<hi>`, e.g. `intensity_p0_5` for index 0.
pub fn feature_label(index: usize) -> Result<String> {
    if index >= DIM {
        return Err(ProsodyError::FeatureIndex(index));
    }
    let feature = BaseFeature::ALL[index / N_SPANS];
    let span = index % N_SPANS;
    Ok(format!(
        "{}_p{}_{}",
        feature.name(),
        SPAN_PERCENT[span],
        SPAN_PERCENT[span + 1]
    ))
}

pub fn feature_labels() -> Vec<String> {
    (0..DIM).map(|i| feature_label(i).expect("in range")).collect()
}

/// Upper edge of each span in seconds from the utterance start.
pub fn span_boundaries(duration_s: f64) -> Result<[f64; N_SPANS]> {
    if duration_s.is_nan() || duration_s < MIN_UTTERANCE_S - 1e-9 {
        return Err(ProsodyError::InvalidArgument(format!(
            "utterance duration {duration_s} s is below the {MIN_UTTERANCE_S} s minimum"
        )));
    }
    let mut out = [0.0; N_SPANS];
    for (o, edge) in out.iter_mut().zip(&SPAN_EDGES[1..]) {
        *o = duration_s * edge;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawProsodyVector {
    pub utterance_id: String,
    pub track_id: String,
    pub values: [f64; DIM],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyVector {
    pub utterance_id: String,
    pub track_id: String,
    pub values: [f64; DIM],
}

impl ProsodyVector {
    pub fn new(utterance_id: impl Into<String>, values: [f64; DIM]) -> Self {
        Self {
            utterance_id: utterance_id.into(),
            track_id: String::new(),
            values,
        }
    }

    /// Language taken from the utterance id prefix (`EN_...`, `ES_...`).
    pub fn language(&self) -> Option<Language> {
        language_of(&self.utterance_id)
    }
}

pub fn language_of(utterance_id: &str) -> Option<Language> {
    utterance_id.split('_').next()?.parse().ok()
}

// Parameters of the mid-level formulas.
const PITCH_RANGE_WINDOW: usize = 30;
const PITCH_RANGE_HOP: usize = 10;
const LOW_PITCH_RATIO: f64 = 0.6;
const CREAK_VOICING: std::ops::Range<f64> = 0.25..0.45;
const JITTER_RATIO: f64 = 0.05;
/// ±200 ms search for the pitch peak that goes with an envelope peak.
const PEAK_SEARCH_FRAMES: usize = 20;
const DISALIGNMENT_SCALE_S: f64 = 0.2;

/// Track-level reference values shared by all utterances of a track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackReference {
    /// Median spectral flux over speech frames.
    pub flux_ref: f64,
    /// Median F0 over voiced frames.
    pub median_f0: f64,
    /// Median pitch_z range of qualifying 300 ms windows.
    pub range_ref: f64,
}

impl TrackReference {
    pub fn of(nfs: &NormalizedFrameSeries) -> Self {
        Self::from_group(std::slice::from_ref(nfs))
    }

    /// Pools the reference values over several series normalized as one track.
    pub fn from_group(group: &[NormalizedFrameSeries]) -> Self {
        let flux: Vec<f64> = group
            .iter()
            .flat_map(|n| {
                n.frames
                    .spectral_flux
                    .iter()
                    .zip(&n.speech_mask)
                    .filter(|(_, &m)| m)
                    .map(|(&f, _)| f)
            })
            .collect();
        let f0: Vec<f64> = group
            .iter()
            .flat_map(|n| n.frames.f0_hz.iter().flatten().copied())
            .collect();
        let ranges: Vec<f64> = group
            .iter()
            .flat_map(|n| pitch_range_windows(&n.pitch_z).into_iter().flatten())
            .collect();
        Self {
            flux_ref: percentile(&flux, 50.0).unwrap_or(0.0),
            median_f0: percentile(&f0, 50.0).unwrap_or(0.0),
            range_ref: percentile(&ranges, 50.0).unwrap_or(0.0),
        }
    }
}

/// Range of pitch_z over each 300 ms window (100 ms hop); `None` when fewer
/// than half its frames are voiced.
fn pitch_range_windows(pitch_z: &[Option<f64>]) -> Vec<Option<f64>> {
    let n = pitch_z.len();
    if n < PITCH_RANGE_WINDOW {
        return Vec::new();
    }
    (0..=(n - PITCH_RANGE_WINDOW) / PITCH_RANGE_HOP)
        .map(|w| {
            let start = w * PITCH_RANGE_HOP;
            let voiced: Vec<f64> = pitch_z[start..start + PITCH_RANGE_WINDOW]
                .iter()
                .flatten()
                .copied()
                .collect();
            if 2 * voiced.len() < PITCH_RANGE_WINDOW {
                return None;
            }
            let max = voiced.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = voiced.iter().copied().fold(f64::INFINITY, f64::min);
            Some(max - min)
        })
        .collect()
}

/// Voiced frames whose pitch_z exceeds the previous frame and is not below the next, both voiced.
fn pitch_maxima(pitch_z: &[Option<f64>]) -> Vec<usize> {
    let n = pitch_z.len();
    (0..n)
        .filter(|&t| {
            let (Some(v), Some(prev), Some(next)) = (
                pitch_z[t],
                t.checked_sub(1).and_then(|p| pitch_z[p]),
                pitch_z.get(t + 1).copied().flatten(),
            ) else {
                return false;
            };
            v > prev && v >= next
        })
        .collect()
}

/// Computes raw prosody vectors for the utterances of one normalized track.
pub struct TrackFeatures<'a> {
    nfs: &'a NormalizedFrameSeries,
    reference: TrackReference,
    ranges: Vec<Option<f64>>,
    pitch_peaks: Vec<usize>,
}

impl<'a> TrackFeatures<'a> {
    pub fn new(nfs: &'a NormalizedFrameSeries) -> Self {
        Self::with_reference(nfs, TrackReference::of(nfs))
    }

    pub fn with_reference(nfs: &'a NormalizedFrameSeries, reference: TrackReference) -> Self {
        Self {
            nfs,
            reference,
            ranges: pitch_range_windows(&nfs.pitch_z),
            pitch_peaks: pitch_maxima(&nfs.pitch_z),
        }
    }

    pub fn reference(&self) -> TrackReference {
        self.reference
    }

    /// Frame ranges of the ten spans of an utterance, assigned by frame centre.
    pub fn span_frames(&self, rec: &UtteranceRecord) -> Result<[std::ops::Range<usize>; N_SPANS]> {
        let ends = span_boundaries(rec.duration_s())?;
        let n = self.nfs.len();
        // First frame whose centre is at or after the start.
        let mut t = (((rec.start_s - frame_center_s(0)) / crate::dsp::FRAME_PERIOD_S).floor() - 1.0)
            .max(0.0) as usize;
        while t < n && frame_center_s(t) < rec.start_s {
            t += 1;
        }
        let mut spans: [std::ops::Range<usize>; N_SPANS] = Default::default();
        for (k, span) in spans.iter_mut().enumerate() {
            let begin = t;
            let last = k == N_SPANS - 1;
            while t < n {
                let rel = frame_center_s(t) - rec.start_s;
                let inside = if last {
                    frame_center_s(t) < rec.end_s
                } else {
                    rel < ends[k]
                };
                if !inside {
                    break;
                }
                t += 1;
            }
            if t == begin {
                return Err(ProsodyError::EmptySpan {
                    utterance_id: rec.utterance_id.clone(),
                    span: k,
                });
            }
            *span = begin..t;
        }
        Ok(spans)
    }

    pub fn utterance(&self, rec: &UtteranceRecord) -> Result<RawProsodyVector> {
        let spans = self.span_frames(rec)?;
        let mut values = [0.0; DIM];
        for (k, span) in spans.iter().enumerate() {
            for feature in BaseFeature::ALL {
                values[feature.index(k)] = self.span_value(feature, span.clone());
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProsodyError::NonFinite(rec.utterance_id.clone()));
        }
        Ok(RawProsodyVector {
            utterance_id: rec.utterance_id.clone(),
            track_id: self.nfs.frames.track_id.clone(),
            values,
        })
    }

    fn span_value(&self, feature: BaseFeature, span: std::ops::Range<usize>) -> f64 {
        let nfs = self.nfs;
        let fs = &nfs.frames;
        let mean_over = |values: &mut dyn Iterator<Item = f64>| {
            let (mut n, mut s) = (0usize, 0.0);
            for v in values {
                n += 1;
                s += v;
            }
            if n == 0 {
                0.0
            } else {
                s / n as f64
            }
        };
        let speech = span.clone().filter(|&t| nfs.speech_mask[t]);

        match feature {
            BaseFeature::Intensity => mean_over(&mut span.map(|t| nfs.energy_z[t])),
            BaseFeature::SpeakingRate => mean_over(&mut span.map(|t| nfs.rate_z[t])),
            BaseFeature::Cpps => mean_over(&mut speech.map(|t| nfs.cpps_z[t])),
            BaseFeature::Lengthening => {
                let flux_ref = self.reference.flux_ref;
                mean_over(&mut speech.map(|t| {
                    if flux_ref > 0.0 {
                        (1.0 - fs.spectral_flux[t] / flux_ref).max(0.0)
                    } else {
                        0.0
                    }
                }))
            }
            BaseFeature::Creakiness => mean_over(&mut span.map(|t| self.creak_score(t))),
            BaseFeature::PitchHighness => {
                mean_over(&mut span.map(|t| nfs.pitch_z[t].map_or(0.0, |z| z.max(0.0))))
            }
            BaseFeature::PitchLowness => {
                mean_over(&mut span.map(|t| nfs.pitch_z[t].map_or(0.0, |z| (-z).max(0.0))))
            }
            BaseFeature::PitchWideness | BaseFeature::PitchNarrowness => {
                let r_ref = self.reference.range_ref;
                if r_ref <= 0.0 {
                    return 0.0;
                }
                let wide = feature == BaseFeature::PitchWideness;
                mean_over(&mut self.overlapping_ranges(span).map(|r| {
                    if wide {
                        (r - r_ref).max(0.0) / r_ref
                    } else {
                        (r_ref - r).max(0.0) / r_ref
                    }
                }))
            }
            BaseFeature::PeakDisalignment => {
                let lo = fs.envelope_peaks.partition_point(|&p| p < span.start);
                let hi = fs.envelope_peaks.partition_point(|&p| p < span.end);
                mean_over(&mut fs.envelope_peaks[lo..hi].iter().map(|&p| {
                    self.nearest_pitch_peak(p).map_or(0.0, |m| {
                        let delay = (m as f64 - p as f64) * crate::dsp::FRAME_PERIOD_S;
                        delay.max(0.0) / DISALIGNMENT_SCALE_S
                    })
                }))
            }
        }
    }

    fn creak_score(&self, t: usize) -> f64 {
        let fs = &self.nfs.frames;
        let mut score = 0.0;
        if let Some(f0) = fs.f0_hz[t] {
            if f0 < LOW_PITCH_RATIO * self.reference.median_f0 {
                score += 0.4;
            }
            if let Some(prev) = t.checked_sub(1).and_then(|p| fs.f0_hz[p]) {
                if (f0 - prev).abs() / f0 > JITTER_RATIO {
                    score += 0.3;
                }
            }
        }
        if CREAK_VOICING.contains(&fs.voicing[t]) {
            score += 0.3;
        }
        f64::clamp(score, 0.0, 1.0)
    }

    /// Ranges of qualifying pitch windows that share at least one frame with `span`.
    fn overlapping_ranges(&self, span: std::ops::Range<usize>) -> impl Iterator<Item = f64> + '_ {
        let first = if span.start >= PITCH_RANGE_WINDOW {
            (span.start - PITCH_RANGE_WINDOW) / PITCH_RANGE_HOP + 1
        } else {
            0
        };
        let end = span.end.div_ceil(PITCH_RANGE_HOP).min(self.ranges.len());
        self.ranges[first.min(end)..end].iter().flatten().copied()
    }

    /// Closest pitch maximum within ±200 ms; ties go to the later one.
    fn nearest_pitch_peak(&self, frame: usize) -> Option<usize> {
        let lo = frame.saturating_sub(PEAK_SEARCH_FRAMES);
        let hi = frame + PEAK_SEARCH_FRAMES;
        let a = self.pitch_peaks.partition_point(|&m| m < lo);
        let b = self.pitch_peaks.partition_point(|&m| m <= hi);
        self.pitch_peaks[a..b]
            .iter()
            .copied()
            .min_by_key(|&m| (m.abs_diff(frame), std::cmp::Reverse(m)))
    }
}

/// Raw vector of one utterance; computes the track references on the fly.
pub fn utterance_raw_vector(nfs: &NormalizedFrameSeries, rec: &UtteranceRecord) -> Result<RawProsodyVector> {
    TrackFeatures::new(nfs).utterance(rec)
}

/// Per-dimension moments over a set of raw vectors; `None` where degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionMoments(pub Vec<Option<Moments>>);

impl DimensionMoments {
    pub fn from_vectors<'a>(vectors: impl IntoIterator<Item = &'a RawProsodyVector> + Clone) -> Self {
        let all: Vec<&RawProsodyVector> = vectors.into_iter().collect();
        Self(
            (0..DIM)
                .map(|d| zscore_moments(all.iter().map(|v| v.values[d])))
                .collect(),
        )
    }

    fn z(&self, dim: usize, x: f64) -> f64 {
        self.0[dim].map_or(0.0, |m| m.z(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackNormalization {
    pub vectors: Vec<ProsodyVector>,
    /// Dimensions with zero variance across the track, set to 0.
    pub zero_variance_dims: Vec<usize>,
    /// Set for a single-utterance track normalized with corpus moments.
    pub used_corpus_fallback: bool,
}

/// z-normalizes each dimension across the utterances of one track.
pub fn znormalize_track(raws: &[RawProsodyVector], corpus: &DimensionMoments) -> TrackNormalization {
    let mut vectors: Vec<ProsodyVector> = raws
        .iter()
        .map(|r| ProsodyVector {
            utterance_id: r.utterance_id.clone(),
            track_id: r.track_id.clone(),
            values: [0.0; DIM],
        })
        .collect();

    if raws.len() == 1 {
        if let Some(r) = raws.first() {
            log::warn!(
                "track {} has a single utterance; normalizing with corpus moments",
                r.track_id
            );
            for d in 0..DIM {
                vectors[0].values[d] = corpus.z(d, r.values[d]);
            }
        }
        return TrackNormalization {
            vectors,
            zero_variance_dims: Vec::new(),
            used_corpus_fallback: true,
        };
    }

    let mut zero_variance_dims = Vec::new();
    for d in 0..DIM {
        match zscore_moments(raws.iter().map(|r| r.values[d])) {
            Some(m) => {
                for (v, r) in vectors.iter_mut().zip(raws) {
                    v.values[d] = m.z(r.values[d]);
                }
            }
            None => zero_variance_dims.push(d),
        }
    }
    TrackNormalization {
        vectors,
        zero_variance_dims,
        used_corpus_fallback: false,
    }
}

/// Normalizes every track, with corpus-wide moments as the single-utterance fallback.
pub fn normalize_tracks(tracks: &[Vec<RawProsodyVector>]) -> Vec<TrackNormalization> {
    let corpus = DimensionMoments::from_vectors(tracks.iter().flatten());
    tracks.iter().map(|t| znormalize_track(t, &corpus)).collect()
}

/// Prosody vectors keyed by utterance id, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    vectors: Vec<ProsodyVector>,
    index: HashMap<String, usize>,
}

impl FeatureTable {
    pub fn new(vectors: Vec<ProsodyVector>) -> Result<Self> {
        let mut index = HashMap::with_capacity(vectors.len());
        for (i, v) in vectors.iter().enumerate() {
            if index.insert(v.utterance_id.clone(), i).is_some() {
                return Err(ProsodyError::DuplicateUtterance(v.utterance_id.clone()));
            }
        }
        Ok(Self { vectors, index })
    }

    pub fn get(&self, utterance_id: &str) -> Option<&ProsodyVector> {
        self.index.get(utterance_id).map(|&i| &self.vectors[i])
    }

    pub fn require(&self, utterance_id: &str) -> Result<&ProsodyVector> {
        self.get(utterance_id)
            .ok_or_else(|| ProsodyError::UnknownUtterance(utterance_id.to_string()))
    }

    pub fn vectors(&self) -> &[ProsodyVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn feature_header() -> Vec<String> {
    let mut header = vec!["utterance_id".to_string(), "track_id".to_string()];
    header.extend(feature_labels());
    header
}

/// Writes the feature CSV: `utterance_id,track_id` and the 100 labels.
pub fn write_features(path: impl AsRef<Path>, vectors: &[ProsodyVector]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| ProsodyError::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "{}", feature_header().join(",")).map_err(io)?;
    for v in vectors {
        write!(w, "{},{}", v.utterance_id, v.track_id).map_err(io)?;
        for x in &v.values {
            // Display for f64 is the shortest exact round-trip representation.
            write!(w, ",{x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| ProsodyError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers().map_err(|e| ProsodyError::csv(path, e))?.clone();
    if headers.iter().ne(feature_header().iter().map(String::as_str)) {
        return Err(ProsodyError::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: "feature header must be utterance_id,track_id followed by the 100 canonical labels"
                .into(),
        });
    }
    let mut vectors = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| ProsodyError::csv(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| ProsodyError::MalformedRow {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut values = [0.0f64; DIM];
        for (d, v) in values.iter_mut().enumerate() {
            let field = &row[d + 2];
            *v = field
                .parse()
                .map_err(|_| bad(format!("column {}: not a number: {field:?}", d + 3)))?;
            if !v.is_finite() {
                return Err(bad(format!("column {}: non-finite value", d + 3)));
            }
        }
        vectors.push(ProsodyVector {
            utterance_id: row[0].to_string(),
            track_id: row[1].to_string(),
            values,
        });
    }
    FeatureTable::new(vectors)
}
