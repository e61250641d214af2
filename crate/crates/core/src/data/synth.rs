//! Synthetic scene dataset: each class is band-passed noise around its
//! own centre frequency plus an amplitude-modulated tone.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::manifest::{render_manifest, ManifestRow, SCENES};
use super::wav::write_wav_pcm16;
use crate::dsp::RawAudio;
use crate::error::{write_file, Error, Result};
use crate::rng::{stream_rng, Stream, StreamRng};

const CITIES: [&str; 6] = ["barcelona", "helsinki", "lisbon", "lyon", "paris", "prague"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthOptions {
    pub per_class: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub seconds: f64,
}

impl SynthOptions {
    pub fn new(per_class: usize, seed: u64) -> Self {
        Self { per_class, seed, sample_rate: 48_000, seconds: 10.0 }
    }

    /// Locations per class: at least four, about four segments each.
    pub fn locations_per_class(&self) -> usize {
        (self.per_class / 4).max(4)
    }
}

/// Centre frequency of class `k`.
pub fn class_frequency(k: usize) -> f64 {
    200.0 * 1.45f64.powi(k as i32)
}

/// Amplitude-modulation rate of class `k`, in Hz.
pub fn class_modulation_rate(k: usize) -> f64 {
    1.0 + 0.75 * k as f64
}

fn bandpass(x: &mut [f64], f0: f64, q: f64, fs: f64) {
    let w0 = 2.0 * std::f64::consts::PI * f0 / fs;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    for v in x.iter_mut() {
        let y = b0 * *v + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = *v;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / rms);
    }
}

fn noise(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// One stereo segment of class `class` recorded at `location`.
pub fn synth_segment(opts: &SynthOptions, class: usize, location: usize, index: usize) -> RawAudio {
    let fs = opts.sample_rate as f64;
    let n = (opts.seconds * fs).round() as usize;
    // Each location shifts the class signature slightly.
    let mut loc_rng = stream_rng(opts.seed, Stream::Synth, class as u64, 1_000_000 + location as u64);
    let f0 = class_frequency(class) * (1.0 + loc_rng.random_range(-0.03..0.03));
    let mut rng = stream_rng(opts.seed, Stream::Synth, class as u64, index as u64);
    let gain = rng.random_range(0.5..1.5);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mod_phase = rng.random_range(0.0..std::f64::consts::TAU);

    let mut band = noise(&mut rng, n);
    bandpass(&mut band, f0, 4.0, fs);
    normalize_rms(&mut band, 0.1);
    let mut floor = noise(&mut rng, n);
    normalize_rms(&mut floor, 0.005);
    let rate = class_modulation_rate(class);
    let w = std::f64::consts::TAU * f0 / fs;
    let wm = std::f64::consts::TAU * rate / fs;
    let left: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64;
            let tone = 0.1 * (1.0 + 0.5 * (wm * t + mod_phase).sin()) * (w * t + phase).sin();
            gain * (band[i] + tone) + floor[i]
        })
        .collect();
    let mut right_noise = noise(&mut rng, n);
    normalize_rms(&mut right_noise, 0.005);
    let pan = rng.random_range(0.8..1.0);
    let right = left.iter().zip(&right_noise).map(|(l, r)| pan * l + r).collect();
    RawAudio { sample_rate: opts.sample_rate, channels: vec![left, right] }
}

/// Manifest rows of the synthetic set, without generating audio.
pub fn synth_manifest(opts: &SynthOptions) -> Vec<ManifestRow> {
    let n_loc = opts.locations_per_class();
    let mut rows = Vec::with_capacity(SCENES.len() * opts.per_class);
    for (k, scene) in SCENES.iter().enumerate() {
        for i in 0..opts.per_class {
            let l = i % n_loc;
            rows.push(ManifestRow {
                path: format!("audio/{scene}-{}-{}-{i}-a.wav", CITIES[(k + l) % CITIES.len()], k * 1000 + l),
                scene: scene.to_string(),
                label: k,
                city: CITIES[(k + l) % CITIES.len()].to_string(),
                location: (k * 1000 + l).to_string(),
                segment: i.to_string(),
                device: "a".into(),
            });
        }
    }
    rows
}

/// Writes `audio/*.wav` and `meta.csv` under `out_dir`.
pub fn synth_dataset(opts: &SynthOptions, out_dir: &Path) -> Result<Vec<ManifestRow>> {
    if opts.per_class < 4 {
        return Err(Error::Config(format!("need at least 4 segments per class, got {}", opts.per_class)));
    }
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let rows = synth_manifest(opts);
    let n_loc = opts.locations_per_class();
    rows.par_iter().enumerate().try_for_each(|(j, row)| {
        let i = j % opts.per_class;
        let audio = synth_segment(opts, row.label, i % n_loc, i);
        write_wav_pcm16(&out_dir.join(&row.path), &audio)
    })?;
    write_file(&out_dir.join("meta.csv"), render_manifest(&rows).as_bytes())?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn manifest_counts() {
        let rows = synth_manifest(&SynthOptions::new(4, 0));
        assert_eq!(rows.len(), 40);
        let locs: HashSet<String> = rows.iter().map(ManifestRow::location_id).collect();
        assert!(locs.len() >= 16);
        for k in 0..10 {
            let per: HashSet<String> = rows.iter().filter(|r| r.label == k).map(ManifestRow::location_id).collect();
            assert!(per.len() >= 4);
        }
    }

    #[test]
    fn segments_replay() {
        let opts = SynthOptions { seconds: 0.05, ..SynthOptions::new(4, 9) };
        assert_eq!(synth_segment(&opts, 3, 1, 5), synth_segment(&opts, 3, 1, 5));
        assert_ne!(synth_segment(&opts, 3, 1, 5), synth_segment(&opts, 3, 1, 6));
    }

    #[test]
    fn class_frequencies_fit_below_nyquist() {
        assert!(class_frequency(9) < 11_025.0 * 0.6);
    }
}
