//! Frame-level analysis of a whole track on a shared 10 ms grid.
//!
//! Frame `t` starts at `t * 10 ms`. The pitch and CPPS analyses use a 40 ms
//! window, energy, flux and band energy a 32 ms window starting at the same
//! sample, so every extractor yields one value per grid frame.

mod cpps;
mod normalize;
mod pitch;
mod spectral;

use std::io::Write;
use std::path::Path;

pub use cpps::{frame_cpps, CEPSTRAL_SMOOTHING_BINS, CEPSTRAL_SMOOTHING_FRAMES};
pub use normalize::{
    normalize_frame_group, normalize_frame_series, percentile, zscore_moments, Moments,
    NormalizedFrameSeries,
};
pub use pitch::{track_pitch, PitchConfig, PitchTrack};
pub use spectral::{envelope_rate, frame_energy_flux, EnergyFlux, EnvelopeRate};

use crate::corpus::AudioTrack;
use crate::error::{ProsodyError, Result};

pub const FRAME_PERIOD_S: f64 = 0.010;
/// Longest analysis window; it fixes the number of frames in a track.
pub const ANALYSIS_WINDOW_S: f64 = 0.040;
pub const SHORT_WINDOW_S: f64 = 0.032;
pub const MIN_F0_HZ: f64 = 60.0;
pub const MAX_F0_HZ: f64 = 400.0;

/// Sample positions of the 10 ms frame grid for one track.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGrid {
    pub sample_rate: u32,
    pub n_samples: usize,
    pub n_frames: usize,
}

impl FrameGrid {
    pub fn new(n_samples: usize, sample_rate: u32) -> Self {
        let long = window_samples(ANALYSIS_WINDOW_S, sample_rate);
        let mut n_frames = 0;
        if n_samples >= long {
            // Largest t with start(t) + long <= n_samples.
            let approx = ((n_samples - long) as f64 / (FRAME_PERIOD_S * sample_rate as f64)) as usize;
            n_frames = approx + 2;
            while n_frames > 0 && frame_start(n_frames - 1, sample_rate) + long > n_samples {
                n_frames -= 1;
            }
        }
        Self {
            sample_rate,
            n_samples,
            n_frames,
        }
    }

    pub fn for_track(track: &AudioTrack) -> Self {
        Self::new(track.samples.len(), track.sample_rate)
    }

    pub fn start(&self, frame: usize) -> usize {
        frame_start(frame, self.sample_rate)
    }

    pub fn window(&self, seconds: f64) -> usize {
        window_samples(seconds, self.sample_rate)
    }
}

/// First sample of frame `t`: `round(t * 0.010 * rate)`.
fn frame_start(frame: usize, sample_rate: u32) -> usize {
    let num = frame as u64 * sample_rate as u64;
    ((num + 50) / 100) as usize
}

fn window_samples(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round() as usize
}

/// Start time of frame `t` in seconds.
pub fn frame_start_s(frame: usize) -> f64 {
    frame as f64 * FRAME_PERIOD_S
}

/// Centre of the 40 ms analysis window of frame `t`, used for span assignment.
pub fn frame_center_s(frame: usize) -> f64 {
    frame_start_s(frame) + ANALYSIS_WINDOW_S / 2.0
}

/// Per-frame low-level features of one track.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    pub track_id: String,
    pub sample_rate: u32,
    /// `None` on unvoiced frames.
    pub f0_hz: Vec<Option<f64>>,
    pub voicing: Vec<f64>,
    pub log_energy: Vec<f64>,
    pub spectral_flux: Vec<f64>,
    pub cpps_raw: Vec<f64>,
    pub envelope_rate: Vec<f64>,
    /// Frames holding envelope peaks that passed the local-median test.
    pub envelope_peaks: Vec<usize>,
}

impl FrameSeries {
    pub fn len(&self) -> usize {
        self.voicing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voicing.is_empty()
    }

    pub fn is_voiced(&self, frame: usize) -> bool {
        self.f0_hz[frame].is_some()
    }

    fn check_aligned(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.f0_hz.len(),
            self.log_energy.len(),
            self.spectral_flux.len(),
            self.cpps_raw.len(),
            self.envelope_rate.len(),
        ];
        if let Some(&bad) = lens.iter().find(|&&l| l != n) {
            return Err(ProsodyError::Dimension {
                expected: n,
                found: bad,
            });
        }
        Ok(())
    }

    /// Writes the frame dump CSV. Unvoiced frames leave `f0_hz` empty.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| ProsodyError::io(path, e);
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(
            w,
            "frame_idx,t_s,f0_hz,voicing,log_energy,spectral_flux,cpps_raw,envelope_rate"
        )
        .map_err(io)?;
        for t in 0..self.len() {
            let f0 = self.f0_hz[t].map(|f| f.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{t},{},{f0},{},{},{},{},{}",
                frame_start_s(t),
                self.voicing[t],
                self.log_energy[t],
                self.spectral_flux[t],
                self.cpps_raw[t],
                self.envelope_rate[t]
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Runs all four extractors on one track and aligns them on the frame grid.
pub fn compute_frame_series(track: &AudioTrack) -> Result<FrameSeries> {
    if track.samples.is_empty() {
        return Err(ProsodyError::EmptyAudio {
            path: track.track_id.clone().into(),
        });
    }
    let pitch = track_pitch(track);
    let short = spectral::short_window_analysis(track);
    let envelope = spectral::envelope_from_band_energy(&short.band_energy);
    let cpps_raw = frame_cpps(track);

    let fs = FrameSeries {
        track_id: track.track_id.clone(),
        sample_rate: track.sample_rate,
        f0_hz: pitch.f0_hz,
        voicing: pitch.voicing,
        log_energy: short.log_energy,
        spectral_flux: short.spectral_flux,
        cpps_raw,
        envelope_rate: envelope.rate,
        envelope_peaks: envelope.peaks,
    };
    fs.check_aligned()?;
    Ok(fs)
}
