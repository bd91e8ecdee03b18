//! Normalized-autocorrelation pitch tracking.

use std::collections::VecDeque;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FrameGrid, ANALYSIS_WINDOW_S, MAX_F0_HZ, MIN_F0_HZ};
use crate::corpus::AudioTrack;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchConfig {
    pub min_hz: f64,
    pub max_hz: f64,
    /// Frames whose best autocorrelation peak is lower than this are unvoiced.
    pub voicing_threshold: f64,
    /// Per-octave bias toward shorter lags, as in Praat's octave cost.
    pub octave_cost: f64,
    /// Candidates above `octave_jump` times the running median are penalized.
    pub octave_jump: f64,
    pub octave_jump_penalty: f64,
    /// Number of recent voiced frames in the running median.
    pub history: usize,
    /// Consecutive unvoiced frames after which the running median is forgotten.
    pub history_reset: usize,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            min_hz: MIN_F0_HZ,
            max_hz: MAX_F0_HZ,
            voicing_threshold: 0.45,
            octave_cost: 0.01,
            octave_jump: 1.6,
            octave_jump_penalty: 0.2,
            history: 15,
            history_reset: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    pub f0_hz: Vec<Option<f64>>,
    pub voicing: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    hz: f64,
    strength: f64,
}

/// Estimates F0 and voicing strength on every frame of the track.
pub fn track_pitch(track: &AudioTrack) -> PitchTrack {
    track_pitch_with(track, &PitchConfig::default())
}

pub fn track_pitch_with(track: &AudioTrack, config: &PitchConfig) -> PitchTrack {
    let grid = FrameGrid::for_track(track);
    let rate = track.sample_rate as f64;
    let window = grid.window(ANALYSIS_WINDOW_S);
    let min_lag = ((rate / config.max_hz).floor() as usize).max(2);
    let max_lag = ((rate / config.min_hz).ceil() as usize).min(window.saturating_sub(2));
    let mut analyzer = Autocorrelator::new(window, max_lag + 1);

    let mut f0_hz = Vec::with_capacity(grid.n_frames);
    let mut voicing = Vec::with_capacity(grid.n_frames);
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(config.history);
    let mut unvoiced_run = 0usize;

    for t in 0..grid.n_frames {
        let start = grid.start(t);
        let frame = &track.samples[start..start + window];
        let r = analyzer.normalized(frame);
        let candidates = peaks(r, min_lag, max_lag, rate, config);

        let best_height = candidates
            .iter()
            .map(|c| c.strength)
            .fold(0.0f64, f64::max)
            .min(1.0);
        voicing.push(best_height);

        if best_height < config.voicing_threshold {
            f0_hz.push(None);
            unvoiced_run += 1;
            if unvoiced_run >= config.history_reset {
                recent.clear();
            }
            continue;
        }

        let median = running_median(&recent);
        let score = |c: &Candidate| {
            let lag_s = 1.0 / c.hz;
            let mut s = c.strength - config.octave_cost * (config.min_hz * lag_s).log2();
            if let Some(m) = median {
                if c.hz > config.octave_jump * m {
                    s -= config.octave_jump_penalty;
                }
            }
            s
        };
        let chosen = candidates
            .iter()
            .filter(|c| c.strength >= config.voicing_threshold)
            .map(|c| (score(c), c.hz))
            .fold(None, |best: Option<(f64, f64)>, cur| match best {
                Some(b) if b.0 >= cur.0 => Some(b),
                _ => Some(cur),
            })
            .map(|(_, hz)| hz.clamp(config.min_hz, config.max_hz));

        f0_hz.push(chosen);
        if let Some(hz) = chosen {
            unvoiced_run = 0;
            if recent.len() == config.history {
                recent.pop_front();
            }
            recent.push_back(hz);
        }
    }

    PitchTrack { f0_hz, voicing }
}

fn running_median(values: &VecDeque<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Local maxima of `r` in the lag range, refined by parabolic interpolation.
fn peaks(r: &[f64], min_lag: usize, max_lag: usize, rate: f64, config: &PitchConfig) -> Vec<Candidate> {
    let mut out = Vec::new();
    if max_lag + 1 >= r.len() || min_lag < 1 {
        return out;
    }
    for lag in min_lag..=max_lag {
        let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
        if !(b > a && b >= c && b > 0.0) {
            continue;
        }
        let denom = a - 2.0 * b + c;
        let (offset, height) = if denom < 0.0 {
            let d = 0.5 * (a - c) / denom;
            (d, b - 0.25 * (a - c) * d)
        } else {
            (0.0, b)
        };
        let hz = rate / (lag as f64 + offset);
        if hz < config.min_hz * 0.97 || hz > config.max_hz * 1.03 {
            continue;
        }
        out.push(Candidate {
            hz,
            strength: height,
        });
    }
    out
}

/// FFT-based normalized autocorrelation of fixed-length frames.
///
/// `r(τ) = Σ x[n]x[n+τ] / sqrt(Σ_{n<W-τ} x[n]² · Σ_{n≥τ} x[n]²)` over the
/// mean-removed frame, so a perfectly periodic frame scores 1 at its period.
struct Autocorrelator {
    window: usize,
    max_lag: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    centered: Vec<f64>,
    prefix: Vec<f64>,
    r: Vec<f64>,
}

impl Autocorrelator {
    fn new(window: usize, max_lag: usize) -> Self {
        let size = (window + max_lag + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            window,
            max_lag,
            forward,
            inverse,
            buffer: vec![Complex::default(); size],
            scratch: vec![Complex::default(); scratch_len],
            centered: vec![0.0; window],
            prefix: vec![0.0; window + 1],
            r: vec![0.0; max_lag + 1],
        }
    }

    fn normalized(&mut self, frame: &[f64]) -> &[f64] {
        let w = self.window;
        let mean = frame.iter().sum::<f64>() / w as f64;
        for (c, &x) in self.centered.iter_mut().zip(frame) {
            *c = x - mean;
        }
        self.prefix[0] = 0.0;
        for i in 0..w {
            self.prefix[i + 1] = self.prefix[i] + self.centered[i] * self.centered[i];
        }
        let total = self.prefix[w];
        self.r.fill(0.0);
        if total <= 0.0 {
            return &self.r;
        }

        for (b, &x) in self.buffer.iter_mut().zip(self.centered.iter()) {
            *b = Complex::new(x, 0.0);
        }
        for b in self.buffer[w..].iter_mut() {
            *b = Complex::default();
        }
        self.forward
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        for b in self.buffer.iter_mut() {
            *b = Complex::new(b.norm_sqr(), 0.0);
        }
        self.inverse
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        let scale = 1.0 / self.buffer.len() as f64;

        // Lags whose overlap carries almost none of the frame energy are noise.
        let floor = 1e-6 * total;
        for lag in 1..=self.max_lag.min(w - 1) {
            let head = self.prefix[w - lag];
            let tail = total - self.prefix[lag];
            if head <= floor || tail <= floor {
                continue;
            }
            self.r[lag] = self.buffer[lag].re * scale / (head * tail).sqrt();
        }
        self.r[0] = 1.0;
        &self.r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{harmonic, noise, sine};

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn direct_autocorrelation_matches_fft_path() {
        let x = harmonic(137.0, 0.4, 0.04, 16000);
        let mut ac = Autocorrelator::new(640, 268);
        let r = ac.normalized(&x).to_vec();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
        for lag in [40usize, 80, 117, 200, 267] {
            let num: f64 = (0..640 - lag).map(|n| c[n] * c[n + lag]).sum();
            let e0: f64 = (0..640 - lag).map(|n| c[n] * c[n]).sum();
            let e1: f64 = (lag..640).map(|n| c[n] * c[n]).sum();
            let direct = num / (e0 * e1).sqrt();
            assert!((r[lag] - direct).abs() < 1e-9, "lag {lag}: {} vs {direct}", r[lag]);
        }
    }

    #[test]
    fn sine_200hz() {
        let track = AudioTrack::new("s", sine(200.0, 0.5, 1.0, 16000), 16000);
        let p = track_pitch(&track);
        let voiced: Vec<f64> = p.f0_hz.iter().flatten().copied().collect();
        assert!(voiced.len() as f64 >= 0.95 * p.f0_hz.len() as f64);
        let m = median(voiced);
        assert!((198.0..=202.0).contains(&m), "median {m}");
    }

    #[test]
    fn white_noise_mostly_unvoiced() {
        let track = AudioTrack::new("n", noise(0.3, 16000, 11), 16000);
        let p = track_pitch(&track);
        let voiced = p.f0_hz.iter().filter(|f| f.is_some()).count();
        assert!(voiced as f64 <= 0.2 * p.f0_hz.len() as f64, "{voiced} voiced");
    }

    #[test]
    fn silence_unvoiced() {
        let track = AudioTrack::new("z", vec![0.0; 16000], 16000);
        let p = track_pitch(&track);
        assert!(p.f0_hz.iter().all(Option::is_none));
        assert!(p.voicing.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn f0_within_search_range() {
        for hz in [55.0, 90.0, 250.0, 390.0, 450.0] {
            let track = AudioTrack::new("h", harmonic(hz, 0.3, 0.5, 16000), 16000);
            for f in track_pitch(&track).f0_hz.into_iter().flatten() {
                assert!((MIN_F0_HZ..=MAX_F0_HZ).contains(&f), "{hz}: {f}");
            }
        }
    }

    #[test]
    fn harmonic_accuracy_across_range_and_rates() {
        for rate in [16000u32, 22050, 44100, 48000] {
            for hz in [80.0, 123.0, 200.0, 287.0, 350.0] {
                let track = AudioTrack::new("h", harmonic(hz, 0.4, 0.6, rate), rate);
                let p = track_pitch(&track);
                let errs: Vec<f64> = p
                    .f0_hz
                    .iter()
                    .flatten()
                    .map(|f| (f - hz).abs())
                    .collect();
                assert!(errs.len() as f64 >= 0.9 * p.f0_hz.len() as f64, "{rate} {hz}");
                assert!(median(errs) <= 2.0, "{rate} {hz}");
            }
        }
    }
}
