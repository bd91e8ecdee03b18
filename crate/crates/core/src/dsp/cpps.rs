//! Smoothed cepstral peak prominence.
//!
//! Per frame: Hann-windowed 40 ms log power spectrum (dB), real cepstrum
//! expressed in dB, 10-frame by 10-bin moving-average smoothing, then the height of the
//! cepstral peak in the 60-400 Hz quefrency range above a least-squares line
//! fitted over 1-16.7 ms.

use std::collections::VecDeque;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::spectral::hann;
use super::{FrameGrid, ANALYSIS_WINDOW_S, MAX_F0_HZ, MIN_F0_HZ};
use crate::corpus::AudioTrack;

pub const CEPSTRAL_SMOOTHING_FRAMES: usize = 10;
pub const CEPSTRAL_SMOOTHING_BINS: usize = 10;
const REGRESSION_START_S: f64 = 0.001;
/// Power floor relative to the frame maximum; keeps the log finite and gain-free.
const RELATIVE_POWER_FLOOR: f64 = 1e-10;
const CEPSTRUM_FLOOR: f64 = 1e-12;

/// Quefrency bin ranges for one sample rate.
#[derive(Debug, Clone, Copy)]
struct Quefrencies {
    regression_lo: usize,
    peak_lo: usize,
    hi: usize,
    /// Bins retained per frame, enough for smoothing around `hi`.
    kept: usize,
}

impl Quefrencies {
    fn new(sample_rate: u32, fft_size: usize) -> Self {
        let rate = sample_rate as f64;
        let hi = ((rate / MIN_F0_HZ).ceil() as usize).min(fft_size / 2 - CEPSTRAL_SMOOTHING_BINS);
        Self {
            regression_lo: (REGRESSION_START_S * rate).round() as usize,
            peak_lo: (rate / MAX_F0_HZ).floor() as usize,
            hi,
            kept: hi + CEPSTRAL_SMOOTHING_BINS,
        }
    }
}

pub fn frame_cpps(track: &AudioTrack) -> Vec<f64> {
    let grid = FrameGrid::for_track(track);
    let n = grid.n_frames;
    let window = grid.window(ANALYSIS_WINDOW_S);
    let size = window.next_power_of_two();
    let q = Quefrencies::new(track.sample_rate, size);
    let mut cepstra = CepstrumFrames::new(window, size, q.kept);

    // Time smoothing over frames [t-5, t+4], clipped at the track edges.
    let before = CEPSTRAL_SMOOTHING_FRAMES / 2;
    let after = CEPSTRAL_SMOOTHING_FRAMES - 1 - before;
    let mut ring: VecDeque<(usize, Vec<f64>)> = VecDeque::with_capacity(CEPSTRAL_SMOOTHING_FRAMES);
    let mut next = 0usize;
    let mut averaged = vec![0.0; q.kept];
    let mut smoothed = vec![0.0; q.kept];
    let mut out = Vec::with_capacity(n);

    for t in 0..n {
        let lo = t.saturating_sub(before);
        let hi = (t + after).min(n - 1);
        while next <= hi {
            let start = grid.start(next);
            let c = cepstra.compute(&track.samples[start..start + window]);
            if ring.len() == CEPSTRAL_SMOOTHING_FRAMES {
                ring.pop_front();
            }
            ring.push_back((next, c));
            next += 1;
        }
        averaged.fill(0.0);
        let mut count = 0usize;
        for (idx, c) in &ring {
            if *idx >= lo && *idx <= hi {
                averaged.iter_mut().zip(c).for_each(|(a, v)| *a += v);
                count += 1;
            }
        }
        averaged.iter_mut().for_each(|a| *a /= count as f64);
        smooth_quefrency(&averaged, &mut smoothed);
        out.push(prominence(&smoothed, &q));
    }
    out
}

fn smooth_quefrency(c: &[f64], out: &mut [f64]) {
    let before = CEPSTRAL_SMOOTHING_BINS / 2;
    let after = CEPSTRAL_SMOOTHING_BINS - 1 - before;
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(before);
        let hi = (i + after + 1).min(c.len());
        *o = c[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
    }
}

/// Peak height above the regression line, both in cepstral units.
fn prominence(c: &[f64], q: &Quefrencies) -> f64 {
    let xs = q.regression_lo..=q.hi;
    let count = xs.clone().count() as f64;
    let mean_x = xs.clone().map(|i| i as f64).sum::<f64>() / count;
    let mean_y = xs.clone().map(|i| c[i]).sum::<f64>() / count;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in xs {
        let dx = i as f64 - mean_x;
        sxy += dx * (c[i] - mean_y);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };

    let mut peak = q.peak_lo;
    for i in q.peak_lo..=q.hi {
        if c[i] > c[peak] {
            peak = i;
        }
    }
    c[peak] - (mean_y + slope * (peak as f64 - mean_x))
}

struct CepstrumFrames {
    window: Vec<f64>,
    forward: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inverse: std::sync::Arc<dyn rustfft::Fft<f64>>,
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    kept: usize,
}

impl CepstrumFrames {
    fn new(window: usize, size: usize, kept: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            window: hann(window),
            forward,
            inverse,
            buffer: vec![Complex::default(); size],
            scratch: vec![Complex::default(); scratch_len],
            kept,
        }
    }

    /// Real cepstrum of the dB power spectrum in dB, truncated to `kept` bins.
    fn compute(&mut self, frame: &[f64]) -> Vec<f64> {
        let w = self.window.len();
        for (b, (&x, &h)) in self.buffer.iter_mut().zip(frame.iter().zip(&self.window)) {
            *b = Complex::new(x * h, 0.0);
        }
        for b in self.buffer[w..].iter_mut() {
            *b = Complex::default();
        }
        self.forward
            .process_with_scratch(&mut self.buffer, &mut self.scratch);

        let max_power = self.buffer.iter().map(|b| b.norm_sqr()).fold(0.0, f64::max);
        let floor = RELATIVE_POWER_FLOOR * max_power + f64::MIN_POSITIVE;
        for b in self.buffer.iter_mut() {
            *b = Complex::new(10.0 * (b.norm_sqr() + floor).log10(), 0.0);
        }
        self.inverse
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        let scale = 1.0 / self.buffer.len() as f64;
        self.buffer[..self.kept]
            .iter()
            .map(|b| {
                let c = b.re * scale;
                10.0 * (c * c + CEPSTRUM_FLOOR).log10()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{noise, pulse_train, rms};

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn pulse_train_beats_noise() {
        let pulses = pulse_train(150.0, 1.0, 16000);
        let level = rms(&pulses);
        let hiss: Vec<f64> = noise(1.0, 16000, 3);
        let scale = level / rms(&hiss);
        let hiss: Vec<f64> = hiss.iter().map(|x| x * scale).collect();

        let p = frame_cpps(&AudioTrack::new("p", pulses, 16000));
        let w = frame_cpps(&AudioTrack::new("w", hiss, 16000));
        assert!(mean(&p) > mean(&w) + 3.0, "pulse {} noise {}", mean(&p), mean(&w));
    }

    #[test]
    fn gain_invariant() {
        let x = pulse_train(120.0, 0.5, 16000);
        let track = AudioTrack::new("p", x, 16000);
        let a = frame_cpps(&track);
        let b = frame_cpps(&track.scaled(3.7));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn silence_is_finite() {
        let track = AudioTrack::new("z", vec![0.0; 8000], 16000);
        assert!(frame_cpps(&track).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn quefrency_ranges() {
        let q = Quefrencies::new(16000, 1024);
        assert_eq!((q.regression_lo, q.peak_lo, q.hi), (16, 40, 267));
        let q = Quefrencies::new(48000, 2048);
        assert_eq!((q.regression_lo, q.peak_lo, q.hi), (48, 120, 800));
    }
}
