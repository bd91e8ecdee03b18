//! Corpus-level extraction: audio tracks to normalized prosody vectors.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::corpus::{read_track, slice_utterance, AudioTrack, CorpusManifest, UtteranceRecord};
use crate::dsp::{compute_frame_series, normalize_frame_series, FrameSeries};
use crate::error::{ProsodyError, Result};
use crate::midlevel::{normalize_tracks, ProsodyVector, RawProsodyVector, TrackFeatures};

#[derive(Debug, Clone, Default)]
pub struct ExtractOptions {
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    /// Directory receiving one frame CSV per track.
    pub dump_frames: Option<PathBuf>,
}

/// Raw vectors of the utterances of one track, in the given order.
pub fn track_raw_vectors(track: &AudioTrack, records: &[&UtteranceRecord]) -> Result<Vec<RawProsodyVector>> {
    for rec in records {
        slice_utterance(track, rec)?;
    }
    series_raw_vectors(compute_frame_series(track)?, records)
}

fn series_raw_vectors(fs: FrameSeries, records: &[&UtteranceRecord]) -> Result<Vec<RawProsodyVector>> {
    let nfs = normalize_frame_series(fs);
    let features = TrackFeatures::new(&nfs);
    records.iter().map(|rec| features.utterance(rec)).collect()
}

/// Extracts a normalized prosody vector for every manifest utterance, in
/// manifest order. Output is independent of `jobs`.
pub fn extract_corpus(
    manifest: &CorpusManifest,
    audio_root: impl AsRef<Path>,
    options: &ExtractOptions,
) -> Result<Vec<ProsodyVector>> {
    let audio_root = audio_root.as_ref();
    if let Some(dir) = &options.dump_frames {
        std::fs::create_dir_all(dir).map_err(|e| ProsodyError::io(dir, e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| ProsodyError::InvalidArgument(format!("thread pool: {e}")))?;

    let tracks = manifest.tracks();
    let raws: Vec<Vec<RawProsodyVector>> = pool.install(|| {
        tracks
            .par_iter()
            .map(|(key, records)| {
                let first = records[0];
                let path = audio_root.join(&first.audio_path);
                let mut track = read_track(&path, first.channel)?;
                track.track_id = key.to_string();
                log::debug!("extracting {} ({} utterances)", track.track_id, records.len());
                for rec in records {
                    slice_utterance(&track, rec)?;
                }
                let fs = compute_frame_series(&track)?;
                if let Some(dir) = &options.dump_frames {
                    fs.write_csv(dir.join(format!("{}.csv", track.track_id)))?;
                }
                series_raw_vectors(fs, records)
            })
            .collect::<Result<_>>()
    })?;

    let mut by_id: HashMap<String, ProsodyVector> = normalize_tracks(&raws)
        .into_iter()
        .flat_map(|t| t.vectors)
        .map(|v| (v.utterance_id.clone(), v))
        .collect();
    manifest
        .records
        .iter()
        .map(|r| {
            by_id
                .remove(&r.utterance_id)
                .ok_or_else(|| ProsodyError::UnknownUtterance(r.utterance_id.clone()))
        })
        .collect()
}
