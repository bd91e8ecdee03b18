//! Deterministic synthetic signals with known prosodic ground truth.
//!
//! Used by the test suites and handy for smoke-testing the extractors.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_wav_i16, MANIFEST_HEADER};
use crate::error::{ProsodyError, Result};

pub fn sine(hz: f64, amplitude: f64, seconds: f64, rate: u32) -> Vec<f64> {
    let n = (seconds * rate as f64).round() as usize;
    (0..n)
        .map(|i| amplitude * (2.0 * PI * hz * i as f64 / rate as f64).sin())
        .collect()
}

/// Sum of the first eight harmonics with 1/k amplitudes, peak-normalized.
pub fn harmonic(hz: f64, amplitude: f64, seconds: f64, rate: u32) -> Vec<f64> {
    let n = (seconds * rate as f64).round() as usize;
    let nyquist = rate as f64 / 2.0;
    let norm: f64 = (1..=8).map(|k| 1.0 / k as f64).sum();
    (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let s: f64 = (1..=8)
                .filter(|&k| hz * (k as f64) < nyquist)
                .map(|k| (2.0 * PI * hz * k as f64 * t).sin() / k as f64)
                .sum();
            amplitude * s / norm
        })
        .collect()
}

/// Harmonic signal following an F0 contour given per sample.
pub fn harmonic_contour(f0: &[f64], amplitude: &[f64], rate: u32) -> Vec<f64> {
    let norm: f64 = (1..=6).map(|k| 1.0 / k as f64).sum();
    let mut phase = 0.0;
    f0.iter()
        .zip(amplitude)
        .map(|(&hz, &a)| {
            phase += 2.0 * PI * hz / rate as f64;
            let s: f64 = (1..=6).map(|k| (k as f64 * phase).sin() / k as f64).sum();
            a * s / norm
        })
        .collect()
}

/// Uniform white noise in `[-amplitude, amplitude]`.
pub fn noise(amplitude: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| amplitude * (2.0 * rng.random::<f64>() - 1.0))
        .collect()
}

/// Glottal-like pulse train: a decaying two-sided pulse per period.
pub fn pulse_train(hz: f64, seconds: f64, rate: u32) -> Vec<f64> {
    let n = (seconds * rate as f64).round() as usize;
    let period = rate as f64 / hz;
    let decay = 0.0015 * rate as f64;
    (0..n)
        .map(|i| {
            let phase = (i as f64) % period;
            let e = (-phase / decay).exp();
            0.5 * e * (2.0 * PI * phase / (period / 3.0)).cos()
        })
        .collect()
}

/// Tone with full raised-cosine amplitude modulation at `mod_hz`.
pub fn am_tone(carrier_hz: f64, mod_hz: f64, amplitude: f64, seconds: f64, rate: u32) -> Vec<f64> {
    let n = (seconds * rate as f64).round() as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let m = 0.5 * (1.0 - (2.0 * PI * mod_hz * t).cos());
            amplitude * m * (2.0 * PI * carrier_hz * t).sin()
        })
        .collect()
}

/// Alternating `burst_s` of tone and `burst_s` of silence.
pub fn tone_bursts(hz: f64, amplitude: f64, burst_s: f64, seconds: f64, rate: u32) -> Vec<f64> {
    let tone = sine(hz, amplitude, seconds, rate);
    tone.into_iter()
        .enumerate()
        .map(|(i, x)| {
            let t = i as f64 / rate as f64;
            if ((t / burst_s).floor() as u64).is_multiple_of(2) {
                x
            } else {
                0.0
            }
        })
        .collect()
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Speech-like audio: voiced syllables at `syllable_hz` with a gliding F0
/// around `base_f0`, separated by short low-level noise gaps.
pub fn pseudo_speech(seconds: f64, base_f0: f64, syllable_hz: f64, seed: u64, rate: u32) -> Vec<f64> {
    let n = (seconds * rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let glide: f64 = rng.random_range(0.1..0.35);
    let drift: f64 = rng.random_range(0.05..0.4);
    let phase0: f64 = rng.random_range(0.0..2.0 * PI);
    let f0: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            base_f0 * (1.0 + glide * (2.0 * PI * drift * t + phase0).sin())
        })
        .collect();
    let envelope: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let s = (PI * syllable_hz * t + phase0).sin().abs();
            0.05 + 0.4 * s.powf(1.5)
        })
        .collect();
    let voiced = harmonic_contour(&f0, &envelope, rate);
    let hiss = noise(0.01, n, seed ^ 0x5eed);
    voiced.iter().zip(hiss).map(|(v, h)| v + h).collect()
}

const CORPUS_UTTERANCE_S: f64 = 2.0;
const CORPUS_GAP_S: f64 = 0.5;

/// Writes a small matched corpus of pseudo-speech under `dir` and returns the
/// manifest path; audio paths in the manifest are relative to `dir`.
///
/// Each speaker has one conversation recorded once per language, with
/// `utterances` pairs of 2 s utterances. The Spanish take of an utterance
/// shares its random contour with the English one, shifted in pitch and rate.
pub fn write_corpus(dir: impl AsRef<Path>, speakers: usize, utterances: usize, rate: u32) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| ProsodyError::io(dir, e))?;
    let manifest = dir.join("manifest.csv");
    let io = |e| ProsodyError::io(&manifest, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(&manifest).map_err(io)?);
    writeln!(w, "{}", MANIFEST_HEADER.join(",")).map_err(io)?;

    for s in 0..speakers {
        let base_f0 = 100.0 + 17.0 * s as f64;
        for (lang, f0_scale, rate_scale) in [("EN", 1.0, 1.0), ("ES", 1.08, 1.15)] {
            let file = format!("{lang}_c{s:02}.wav");
            let gap = (CORPUS_GAP_S * rate as f64).round() as usize;
            let mut samples = noise(0.005, gap, (s * 1000) as u64);
            for u in 0..utterances {
                let start = samples.len() as f64 / rate as f64;
                let seed = (s * 1000 + u + 1) as u64;
                let syllable_hz = 3.0 + (u % 4) as f64 * 0.6;
                let speech = pseudo_speech(
                    CORPUS_UTTERANCE_S,
                    base_f0 * f0_scale * (1.0 + 0.05 * (u % 3) as f64),
                    syllable_hz * rate_scale,
                    seed,
                    rate,
                );
                samples.extend(speech);
                samples.extend(noise(0.005, gap, seed ^ 0xfeed));
                writeln!(
                    w,
                    "{lang}_{s:02}_{u:02},{s:02}_{u:02},{lang},S{s:02},c{s:02},{file},0,{start},{}",
                    start + CORPUS_UTTERANCE_S
                )
                .map_err(io)?;
            }
            write_wav_i16(dir.join(&file), &samples, rate)?;
        }
    }
    w.flush().map_err(io)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_and_determinism() {
        assert_eq!(sine(100.0, 1.0, 1.0, 16000).len(), 16000);
        assert_eq!(noise(1.0, 10, 7), noise(1.0, 10, 7));
        assert_ne!(noise(1.0, 10, 7), noise(1.0, 10, 8));
        assert_eq!(pseudo_speech(0.5, 150.0, 4.0, 1, 16000).len(), 8000);
    }
}
