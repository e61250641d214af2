//! Area-normalized triangular mel filters on the Slaney scale.

use super::stft::{Matrix, N_FFT};
use crate::error::{Error, Result};

const F_SP: f64 = 200.0 / 3.0;
const BREAK_HZ: f64 = 1000.0;
const BREAK_MEL: f64 = BREAK_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < BREAK_HZ {
        hz / F_SP
    } else {
        BREAK_MEL + (hz / BREAK_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < BREAK_MEL {
        mel * F_SP
    } else {
        BREAK_HZ * ((mel - BREAK_MEL) * log_step()).exp()
    }
}

/// `n_mels + 2` band edges evenly spaced in mel from 0 Hz to Nyquist.
pub fn band_edges(n_mels: usize, sample_rate: f64) -> Vec<f64> {
    let top = hz_to_mel(sample_rate / 2.0);
    (0..n_mels + 2).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect()
}

/// Centre frequency of every band.
pub fn center_frequencies(n_mels: usize, sample_rate: f64) -> Vec<f64> {
    band_edges(n_mels, sample_rate)[1..=n_mels].to_vec()
}

/// `[n_mels x n_bins]` filterbank. Filter `i` rises from edge `i` to edge
/// `i + 1`, falls to edge `i + 2`, and is scaled by `2 / (f[i+2] - f[i])`.
pub fn mel_filterbank(n_mels: usize, n_bins: usize, sample_rate: f64) -> Result<Matrix> {
    if n_mels == 0 || n_bins < 2 {
        return Err(Error::Config(format!("cannot build {n_mels} mel bands over {n_bins} bins")));
    }
    let n_fft = 2 * (n_bins - 1);
    let edges = band_edges(n_mels, sample_rate);
    let mut fb = Matrix::zeros(n_mels, n_bins);
    for i in 0..n_mels {
        let (lo, mid, hi) = (edges[i], edges[i + 1], edges[i + 2]);
        let norm = 2.0 / (hi - lo);
        let row = &mut fb.data[i * n_bins..(i + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * sample_rate / n_fft as f64;
            let rise = (f - lo) / (mid - lo);
            let fall = (hi - f) / (hi - mid);
            *w = rise.min(fall).max(0.0) * norm;
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::Config(format!(
                "{n_mels} mel bands exceed the resolution of a {n_fft}-point transform (band {i} is empty)"
            )));
        }
    }
    Ok(fb)
}

/// Standard filterbank for the analysis rate and transform size.
pub fn default_filterbank(n_mels: usize, sample_rate: f64) -> Result<Matrix> {
    mel_filterbank(n_mels, N_FFT / 2 + 1, sample_rate)
}
