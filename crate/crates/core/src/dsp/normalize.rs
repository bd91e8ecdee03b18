//! Per-track z-normalization of the frame-level channels.

use super::FrameSeries;

/// Mean and population standard deviation of a reference set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    /// `None` when the set is empty or has (numerically) zero variance.
    pub fn of(values: impl IntoIterator<Item = f64> + Clone) -> Option<Moments> {
        zscore_moments(values)
    }

    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

/// Two-pass mean and population std; `None` when degenerate.
pub fn zscore_moments(values: impl IntoIterator<Item = f64> + Clone) -> Option<Moments> {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let var = values.into_iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if !std.is_finite() || std <= 1e-12 * mean.abs().max(1.0) {
        return None;
    }
    Some(Moments { mean, std })
}

/// Linear-interpolation percentile (`q` in [0, 100]) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFrameSeries {
    pub frames: FrameSeries,
    /// z-scored log2 F0, `None` on unvoiced frames.
    pub pitch_z: Vec<Option<f64>>,
    pub energy_z: Vec<f64>,
    pub cpps_z: Vec<f64>,
    pub rate_z: Vec<f64>,
    pub speech_mask: Vec<bool>,
    /// Channels that were degenerate on this track and were set to zero.
    pub degenerate: Vec<&'static str>,
}

impl NormalizedFrameSeries {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

const SPEECH_ENERGY_PERCENTILE: f64 = 25.0;

pub fn normalize_frame_series(fs: FrameSeries) -> NormalizedFrameSeries {
    normalize_frame_group(vec![fs])
        .pop()
        .expect("one series in, one out")
}

/// Normalizes several series as if they were one track: the speech threshold
/// and all moments are pooled over every frame of the group.
pub fn normalize_frame_group(group: Vec<FrameSeries>) -> Vec<NormalizedFrameSeries> {
    let all_energy: Vec<f64> = group.iter().flat_map(|f| f.log_energy.iter().copied()).collect();
    let threshold = percentile(&all_energy, SPEECH_ENERGY_PERCENTILE).unwrap_or(f64::INFINITY);

    let masks: Vec<Vec<bool>> = group
        .iter()
        .map(|fs| {
            (0..fs.len())
                .map(|t| fs.log_energy[t] > threshold || fs.is_voiced(t))
                .collect()
        })
        .collect();

    let speech_values = |channel: fn(&FrameSeries) -> &Vec<f64>| {
        group
            .iter()
            .zip(&masks)
            .flat_map(move |(fs, mask)| {
                channel(fs)
                    .iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|(&v, _)| v)
            })
    };
    let energy = zscore_moments(speech_values(|f| &f.log_energy));
    let cpps = zscore_moments(speech_values(|f| &f.cpps_raw));
    let rate = zscore_moments(speech_values(|f| &f.envelope_rate));
    let pitch = zscore_moments(group.iter().flat_map(|f| f.f0_hz.iter().flatten().map(|hz| hz.log2())));

    let track_ids: Vec<&str> = group.iter().map(|f| f.track_id.as_str()).collect();
    let mut degenerate = Vec::new();
    for (name, m) in [("pitch", pitch), ("energy", energy), ("cpps", cpps), ("rate", rate)] {
        if m.is_none() {
            log::warn!(
                "track {}: {name} channel has no variance over its reference frames; set to 0",
                track_ids.join("+")
            );
            degenerate.push(name);
        }
    }

    let z_all = |values: &[f64], m: Option<Moments>| -> Vec<f64> {
        match m {
            Some(m) => values.iter().map(|&v| m.z(v)).collect(),
            None => vec![0.0; values.len()],
        }
    };

    group
        .into_iter()
        .zip(masks)
        .map(|(frames, speech_mask)| NormalizedFrameSeries {
            pitch_z: frames
                .f0_hz
                .iter()
                .map(|f| f.map(|hz| pitch.map_or(0.0, |m| m.z(hz.log2()))))
                .collect(),
            energy_z: z_all(&frames.log_energy, energy),
            cpps_z: z_all(&frames.cpps_raw, cpps),
            rate_z: z_all(&frames.envelope_rate, rate),
            speech_mask,
            degenerate: degenerate.clone(),
            frames,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f0: Vec<Option<f64>>, energy: Vec<f64>) -> FrameSeries {
        let n = f0.len();
        FrameSeries {
            track_id: "t".into(),
            sample_rate: 16000,
            voicing: f0.iter().map(|f| if f.is_some() { 0.9 } else { 0.1 }).collect(),
            f0_hz: f0,
            log_energy: energy,
            spectral_flux: vec![0.1; n],
            cpps_raw: (0..n).map(|i| (i % 7) as f64).collect(),
            envelope_rate: (0..n).map(|i| (i % 3) as f64).collect(),
            envelope_peaks: vec![],
        }
    }

    fn moments(values: impl Iterator<Item = f64>) -> (f64, f64) {
        let v: Vec<f64> = values.collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        (mean, var.sqrt())
    }

    #[test]
    fn pitch_moments() {
        let f0: Vec<Option<f64>> = (0..200)
            .map(|i| if i % 4 == 0 { None } else { Some(100.0 + (i * 37 % 150) as f64) })
            .collect();
        let energy = (0..200).map(|i| -3.0 + (i % 11) as f64 * 0.1).collect();
        let n = normalize_frame_series(series(f0, energy));
        let (mean, std) = moments(n.pitch_z.iter().flatten().copied());
        assert!(mean.abs() < 1e-9 && (std - 1.0).abs() < 1e-9);
        let speech = |v: &Vec<f64>| {
            v.iter()
                .zip(&n.speech_mask)
                .filter(|(_, &m)| m)
                .map(|(&x, _)| x)
                .collect::<Vec<_>>()
        };
        for ch in [&n.energy_z, &n.cpps_z, &n.rate_z] {
            let (mean, std) = moments(speech(ch).into_iter());
            assert!(mean.abs() < 1e-9 && (std - 1.0).abs() < 1e-9);
        }
        assert!(n.degenerate.is_empty());
        assert_eq!(n.pitch_z[0], None);
    }

    #[test]
    fn constant_energy_is_degenerate() {
        let f0 = (0..50).map(|i| if i < 25 { Some(120.0 + i as f64) } else { None }).collect();
        let n = normalize_frame_series(series(f0, vec![-2.0; 50]));
        assert!(n.energy_z.iter().all(|&z| z == 0.0));
        assert_eq!(n.degenerate, vec!["energy"]);
    }

    #[test]
    fn speech_mask_rule() {
        let f0 = vec![None, Some(100.0), None, None, None];
        let energy = vec![-5.0, -5.0, -1.0, -5.0, -0.5];
        let n = normalize_frame_series(series(f0, energy));
        // 25th percentile is -5, so only strictly louder or voiced frames count.
        assert_eq!(n.speech_mask, vec![false, true, true, false, true]);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0, 5.0], 25.0), Some(2.0));
        assert_eq!(percentile(&[1.0, 2.0], 25.0), Some(1.25));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn group_pools_moments() {
        let a = series(vec![Some(100.0); 10], (0..10).map(|i| i as f64).collect());
        let b = series(vec![Some(200.0); 10], (0..10).map(|i| i as f64).collect());
        let out = normalize_frame_group(vec![a, b]);
        assert!(out[0].pitch_z.iter().flatten().all(|&z| (z + 1.0).abs() < 1e-12));
        assert!(out[1].pitch_z.iter().flatten().all(|&z| (z - 1.0).abs() < 1e-12));
    }
}
