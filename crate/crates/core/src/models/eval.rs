//! Average-error evaluation of transfer models.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::Direction;
use crate::corpus::{read_track, Language, MatchedPair, UtteranceRecord};
use crate::dsp::{compute_frame_series, normalize_frame_group};
use crate::error::{ProsodyError, Result};
use crate::metric::dissimilarity;
use crate::midlevel::{
    znormalize_track, DimensionMoments, FeatureTable, ProsodyVector, RawProsodyVector,
    TrackFeatures, TrackReference,
};

/// The naive model: the translation keeps the source prosody.
pub fn naive_predict(x: &ProsodyVector) -> ProsodyVector {
    x.clone()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairError {
    pub pair_id: String,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub model: String,
    pub direction: Direction,
    pub n_test: usize,
    pub average_error: f64,
    pub per_pair: Vec<PairError>,
}

/// Scores predictions against references keyed by pair id.
///
/// Both sides must cover the same pair ids; per-pair errors follow the order
/// of `predictions`.
pub fn evaluate(
    model: &str,
    direction: Direction,
    predictions: &[(String, ProsodyVector)],
    references: &[(String, ProsodyVector)],
) -> Result<EvaluationReport> {
    let refs: HashMap<&str, &ProsodyVector> =
        references.iter().map(|(id, v)| (id.as_str(), v)).collect();
    if refs.len() != references.len() {
        return Err(ProsodyError::PairMismatch("duplicate pair id among references".into()));
    }
    if predictions.len() != references.len() {
        return Err(ProsodyError::PairMismatch(format!(
            "{} predictions for {} references",
            predictions.len(),
            references.len()
        )));
    }
    if predictions.is_empty() {
        return Err(ProsodyError::InvalidArgument("no pairs to evaluate".into()));
    }
    let mut seen = HashSet::new();
    for (id, _) in predictions {
        if !refs.contains_key(id.as_str()) || !seen.insert(id.as_str()) {
            return Err(ProsodyError::PairMismatch(format!(
                "prediction for {id} has no unique reference"
            )));
        }
    }

    let per_pair: Vec<PairError> = predictions
        .par_iter()
        .map(|(id, p)| {
            Ok(PairError {
                pair_id: id.clone(),
                error: dissimilarity(p, refs[id.as_str()])?,
            })
        })
        .collect::<Result<_>>()?;
    let average_error = per_pair.iter().map(|e| e.error).sum::<f64>() / per_pair.len() as f64;
    Ok(EvaluationReport {
        model: model.to_string(),
        direction,
        n_test: per_pair.len(),
        average_error,
        per_pair,
    })
}

impl EvaluationReport {
    /// Writes `pair_id,error` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| ProsodyError::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(w, "pair_id,error").map_err(io)?;
        for e in &self.per_pair {
            writeln!(w, "{},{}", e.pair_id, e.error).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model          {}", self.model)?;
        writeln!(f, "direction      {}", self.direction)?;
        writeln!(f, "test pairs     {}", self.n_test)?;
        writeln!(f, "average error  {:.4}", self.average_error)
    }
}

/// Reads one utterance id per line; blank lines and `#` comments are skipped.
pub fn read_exclusions(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ProsodyError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

/// Scores the prosody of synthesized translations against the human references.
///
/// `synth_dir` holds `<utterance_id>.wav` for the target side of each pair not
/// in `exclusions`. Each file is one utterance; all files are normalized
/// together as the track of a single synthetic voice.
pub fn eval_external_audio(
    synth_dir: impl AsRef<Path>,
    pairs: &[MatchedPair],
    direction: Direction,
    references: &FeatureTable,
    exclusions: &HashSet<String>,
) -> Result<EvaluationReport> {
    let synth_dir = synth_dir.as_ref();
    let target = direction.target();
    let kept: Vec<&MatchedPair> = pairs
        .iter()
        .filter(|p| !exclusions.contains(&p.side(target).utterance_id))
        .collect();
    if kept.len() < pairs.len() {
        log::info!("excluded {} of {} pairs", pairs.len() - kept.len(), pairs.len());
    }

    let series = kept
        .par_iter()
        .map(|p| {
            let id = &p.side(target).utterance_id;
            let path = synth_dir.join(format!("{id}.wav"));
            if !path.is_file() {
                return Err(ProsodyError::MissingSynth(id.clone()));
            }
            let mut track = read_track(&path, 0)?;
            track.track_id = "synthetic_voice".into();
            compute_frame_series(&track)
        })
        .collect::<Result<Vec<_>>>()?;
    let group = normalize_frame_group(series);
    let reference = TrackReference::from_group(&group);

    let raws: Vec<RawProsodyVector> = kept
        .par_iter()
        .zip(&group)
        .map(|(p, nfs)| {
            let rec = whole_file_record(p.side(target), nfs.len());
            TrackFeatures::with_reference(nfs, reference).utterance(&rec)
        })
        .collect::<Result<_>>()?;
    let normalized = znormalize_track(&raws, &DimensionMoments::from_vectors(&raws));

    let predictions: Vec<(String, ProsodyVector)> = kept
        .iter()
        .zip(normalized.vectors)
        .map(|(p, v)| (p.pair_id.clone(), v))
        .collect();
    let refs = target_vectors(references, &kept, target)?;
    evaluate("synthesizer", direction, &predictions, &refs)
}

fn whole_file_record(reference: &UtteranceRecord, n_frames: usize) -> UtteranceRecord {
    // The file ends where the last full analysis window ends.
    let end_s = crate::dsp::frame_start_s(n_frames.saturating_sub(1)) + crate::dsp::ANALYSIS_WINDOW_S;
    UtteranceRecord {
        start_s: 0.0,
        end_s,
        ..reference.clone()
    }
}

fn target_vectors(
    table: &FeatureTable,
    pairs: &[&MatchedPair],
    target: Language,
) -> Result<Vec<(String, ProsodyVector)>> {
    pairs
        .iter()
        .map(|p| Ok((p.pair_id.clone(), table.require(&p.side(target).utterance_id)?.clone())))
        .collect()
}
