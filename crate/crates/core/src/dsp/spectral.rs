//! Short-window (32 ms) analyses: log energy, spectral flux and the
//! syllable-rate envelope derived from 300-2500 Hz band energy.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{FrameGrid, SHORT_WINDOW_S};
use crate::corpus::AudioTrack;

pub const ENERGY_EPSILON: f64 = 1e-8;
pub const BAND_LOW_HZ: f64 = 300.0;
pub const BAND_HIGH_HZ: f64 = 2500.0;
/// 50 ms moving average at the 10 ms frame period.
const ENVELOPE_SMOOTHING_FRAMES: usize = 5;
/// ±500 ms neighbourhood for the local median and the peak count.
const ENVELOPE_HALF_SPAN: usize = 50;
const PEAK_MEDIAN_RATIO: f64 = 1.5;
const RATE_WINDOW_S: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyFlux {
    pub log_energy: Vec<f64>,
    pub spectral_flux: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeRate {
    pub rate: Vec<f64>,
    pub peaks: Vec<usize>,
}

pub(super) struct ShortWindow {
    pub log_energy: Vec<f64>,
    pub spectral_flux: Vec<f64>,
    pub band_energy: Vec<f64>,
}

/// `ln(RMS + ε)` and the L2 distance between consecutive L1-normalized
/// magnitude spectra. The first frame has zero flux.
pub fn frame_energy_flux(track: &AudioTrack) -> EnergyFlux {
    let s = short_window_analysis(track);
    EnergyFlux {
        log_energy: s.log_energy,
        spectral_flux: s.spectral_flux,
    }
}

/// Count of prominent band-energy peaks within ±500 ms of each frame, per second.
pub fn envelope_rate(track: &AudioTrack) -> EnvelopeRate {
    envelope_from_band_energy(&short_window_analysis(track).band_energy)
}

pub(super) fn short_window_analysis(track: &AudioTrack) -> ShortWindow {
    let grid = FrameGrid::for_track(track);
    let window = grid.window(SHORT_WINDOW_S);
    let size = window.next_power_of_two();
    let fft = FftPlanner::new().plan_fft_forward(size);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    let mut buffer = vec![Complex::default(); size];
    let hann = hann(window);

    let bin_hz = track.sample_rate as f64 / size as f64;
    let band_lo = (BAND_LOW_HZ / bin_hz).ceil() as usize;
    let band_hi = ((BAND_HIGH_HZ / bin_hz).floor() as usize).min(size / 2);

    let n = grid.n_frames;
    let mut log_energy = Vec::with_capacity(n);
    let mut spectral_flux = Vec::with_capacity(n);
    let mut band_energy = Vec::with_capacity(n);
    let mut previous = vec![0.0; size / 2 + 1];
    let mut current = vec![0.0; size / 2 + 1];

    for t in 0..n {
        let start = grid.start(t);
        let frame = &track.samples[start..start + window];

        let mean_square = frame.iter().map(|x| x * x).sum::<f64>() / window as f64;
        log_energy.push((mean_square.sqrt() + ENERGY_EPSILON).ln());

        for (b, (&x, &w)) in buffer.iter_mut().zip(frame.iter().zip(&hann)) {
            *b = Complex::new(x * w, 0.0);
        }
        for b in buffer[window..].iter_mut() {
            *b = Complex::default();
        }
        fft.process_with_scratch(&mut buffer, &mut scratch);

        let mut l1 = 0.0;
        for (c, b) in current.iter_mut().zip(&buffer) {
            *c = b.norm();
            l1 += *c;
        }
        if l1 > 0.0 {
            current.iter_mut().for_each(|c| *c /= l1);
        }
        band_energy.push(buffer[band_lo..=band_hi].iter().map(|b| b.norm_sqr()).sum());

        let flux = if t == 0 {
            0.0
        } else {
            previous
                .iter()
                .zip(&current)
                .map(|(p, c)| (c - p) * (c - p))
                .sum::<f64>()
                .sqrt()
        };
        spectral_flux.push(flux);
        std::mem::swap(&mut previous, &mut current);
    }

    ShortWindow {
        log_energy,
        spectral_flux,
        band_energy,
    }
}

pub(super) fn envelope_from_band_energy(band: &[f64]) -> EnvelopeRate {
    let n = band.len();
    let smoothed = moving_average(band, ENVELOPE_SMOOTHING_FRAMES);

    let mut peaks = Vec::new();
    let mut window = Vec::with_capacity(2 * ENVELOPE_HALF_SPAN + 1);
    for t in 1..n.saturating_sub(1) {
        let e = smoothed[t];
        if !(e > smoothed[t - 1] && e >= smoothed[t + 1]) {
            continue;
        }
        let lo = t.saturating_sub(ENVELOPE_HALF_SPAN);
        let hi = (t + ENVELOPE_HALF_SPAN + 1).min(n);
        window.clear();
        window.extend_from_slice(&smoothed[lo..hi]);
        if e > PEAK_MEDIAN_RATIO * median_in_place(&mut window) {
            peaks.push(t);
        }
    }

    // Count of peaks in [t - 50, t + 50] via a prefix count over frames.
    let mut prefix = vec![0usize; n + 1];
    for &p in &peaks {
        prefix[p + 1] += 1;
    }
    for i in 0..n {
        prefix[i + 1] += prefix[i];
    }
    let rate = (0..n)
        .map(|t| {
            let lo = t.saturating_sub(ENVELOPE_HALF_SPAN);
            let hi = (t + ENVELOPE_HALF_SPAN + 1).min(n);
            (prefix[hi] - prefix[lo]) as f64 / RATE_WINDOW_S
        })
        .collect();

    EnvelopeRate { rate, peaks }
}

/// Centred moving average; the window is clipped at the edges.
fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let before = (width - 1) / 2;
    let after = width - 1 - before;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after + 1).min(x.len());
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn median_in_place(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Symmetric Hann window.
pub(super) fn hann(len: usize) -> Vec<f64> {
    if len <= 1 {
        return vec![1.0; len];
    }
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{am_tone, sine, tone_bursts};

    #[test]
    fn stationary_sine_has_no_flux() {
        let track = AudioTrack::new("s", sine(1000.0, 0.5, 1.0, 16000), 16000);
        let ef = frame_energy_flux(&track);
        let n = ef.spectral_flux.len();
        for &f in &ef.spectral_flux[1..n - 1] {
            assert!(f <= 1e-3, "flux {f}");
        }
    }

    #[test]
    fn doubling_gain_shifts_log_energy() {
        let track = AudioTrack::new("s", sine(440.0, 0.2, 0.5, 16000), 16000);
        let a = frame_energy_flux(&track);
        let b = frame_energy_flux(&track.scaled(2.0));
        for t in 0..a.log_energy.len() {
            assert!((b.log_energy[t] - a.log_energy[t] - 2f64.ln()).abs() < 1e-6);
            assert!((b.spectral_flux[t] - a.spectral_flux[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn flux_peaks_at_burst_boundaries() {
        // 100 ms on, 100 ms off; boundaries every 10 frames.
        let track = AudioTrack::new("b", tone_bursts(500.0, 0.5, 0.1, 1.0, 16000), 16000);
        let ef = frame_energy_flux(&track);

        // Oracle: difference of normalized magnitude spectra computed naively.
        let window = 512;
        let spectrum = |start: usize| -> Vec<f64> {
            let w = hann(window);
            let mags: Vec<f64> = (0..=256)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for n in 0..window {
                        let ph = -2.0 * std::f64::consts::PI * (k * n) as f64 / 512.0;
                        let x = track.samples[start + n] * w[n];
                        re += x * ph.cos();
                        im += x * ph.sin();
                    }
                    (re * re + im * im).sqrt()
                })
                .collect();
            let s: f64 = mags.iter().sum();
            if s > 0.0 {
                mags.iter().map(|m| m / s).collect()
            } else {
                mags
            }
        };
        for t in [5usize, 9, 10, 14, 20, 33] {
            let a = spectrum((t - 1) * 160);
            let b = spectrum(t * 160);
            let direct = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!((direct - ef.spectral_flux[t]).abs() < 1e-9, "frame {t}");
        }

        // Frames straddling an on/off edge change far more than steady ones.
        let steady = ef.spectral_flux[4];
        let edge_max = ef.spectral_flux[7..12].iter().cloned().fold(0.0, f64::max);
        assert!(edge_max > 0.1 && steady < 1e-3, "edge {edge_max} steady {steady}");
    }

    #[test]
    fn am_tone_rate() {
        let track = AudioTrack::new("am", am_tone(1000.0, 5.0, 0.5, 4.0, 16000), 16000);
        let env = envelope_rate(&track);
        let n = env.rate.len();
        for &r in &env.rate[60..n - 60] {
            assert!((4.0..=6.0).contains(&r), "rate {r}");
        }
    }

    #[test]
    fn unmodulated_and_silent_rate_zero() {
        let tone = AudioTrack::new("t", sine(700.0, 0.5, 2.0, 16000), 16000);
        assert!(envelope_rate(&tone).rate.iter().all(|&r| r == 0.0));
        let silent = AudioTrack::new("z", vec![0.0; 32000], 16000);
        assert!(envelope_rate(&silent).rate.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn moving_average_edges() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0, 5.0], 5), vec![2.0, 2.5, 3.0, 3.5, 4.0]);
    }
}
