//! Log-mel feature extraction.

mod cache;
mod mel;
mod resample;
mod stft;

pub use cache::{decode_features, encode_features, read_features, write_features};
pub use mel::{band_edges, center_frequencies, default_filterbank, hz_to_mel, mel_filterbank, mel_to_hz};
pub use resample::{
    bessel_i0, preprocess, AudioSegment, RawAudio, Resampler, KAISER_BETA, TARGET_RATE, ZERO_CROSSINGS,
};
pub use stft::{frame_count, hamming, stft_power, Matrix, HOP, N_BINS, N_FFT};

use crate::error::{Error, Result};
use crate::tensor::gemm;

pub const N_MELS: usize = 256;
pub const N_FRAMES: usize = 512;
pub const LOG_FLOOR: f64 = 1e-10;

/// Log mel-band energies, band-major (`values[band * n_frames + frame]`).
#[derive(Clone, Debug, PartialEq)]
pub struct LogMelFeatures {
    pub n_mels: usize,
    pub n_frames: usize,
    pub values: Vec<f32>,
}

impl LogMelFeatures {
    pub fn at(&self, band: usize, frame: usize) -> f32 {
        self.values[band * self.n_frames + frame]
    }

    /// Frames `start..start + len` of every band.
    pub fn window(&self, start: usize, len: usize) -> Result<LogMelFeatures> {
        if start + len > self.n_frames {
            return Err(Error::Input(format!("window {start}..{} outside {} frames", start + len, self.n_frames)));
        }
        let values = (0..self.n_mels)
            .flat_map(|b| self.values[b * self.n_frames + start..b * self.n_frames + start + len].iter().copied())
            .collect();
        Ok(LogMelFeatures { n_mels: self.n_mels, n_frames: len, values })
    }

    /// Truncates or pads (with the log floor) to exactly `n_frames`.
    pub fn fit_frames(&self, n_frames: usize) -> LogMelFeatures {
        let floor = LOG_FLOOR.ln() as f32;
        let keep = self.n_frames.min(n_frames);
        let mut values = vec![floor; self.n_mels * n_frames];
        for b in 0..self.n_mels {
            values[b * n_frames..b * n_frames + keep]
                .copy_from_slice(&self.values[b * self.n_frames..b * self.n_frames + keep]);
        }
        LogMelFeatures { n_mels: self.n_mels, n_frames, values }
    }
}

/// Natural-log mel energies `[n_mels x T]` of a preprocessed segment, at
/// full precision and with the raw frame count.
pub fn log_mel_matrix(seg: &AudioSegment, filterbank: &Matrix) -> Result<Matrix> {
    let power = stft_power(&seg.samples)?;
    if filterbank.cols != power.rows {
        return Err(Error::Dimension(format!("filterbank has {} bins, spectrogram {}", filterbank.cols, power.rows)));
    }
    let mut out = Matrix::zeros(filterbank.rows, power.cols);
    gemm(filterbank.rows, power.rows, power.cols, &filterbank.data, false, &power.data, false, &mut out.data, false);
    out.data.iter_mut().for_each(|v| *v = v.max(LOG_FLOOR).ln());
    Ok(out)
}

/// Features of one preprocessed segment, standardized to 512 frames.
pub fn log_mel(seg: &AudioSegment) -> Result<LogMelFeatures> {
    let fb = default_filterbank(N_MELS, seg.sample_rate as f64)?;
    let m = log_mel_matrix(seg, &fb)?;
    let raw = LogMelFeatures { n_mels: m.rows, n_frames: m.cols, values: m.data.iter().map(|&v| v as f32).collect() };
    Ok(raw.fit_frames(N_FRAMES))
}

/// Decoded audio to network-ready features.
pub fn extract(raw: &RawAudio) -> Result<LogMelFeatures> {
    log_mel(&preprocess(raw)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_sits_on_the_floor() {
        let seg = AudioSegment { samples: vec![0.0; 22_050], sample_rate: TARGET_RATE };
        let f = log_mel(&seg).unwrap();
        assert_eq!((f.n_mels, f.n_frames), (256, 512));
        assert!(f.values.iter().all(|&v| v == LOG_FLOOR.ln() as f32));
    }

    #[test]
    fn windows_and_padding() {
        let f = LogMelFeatures { n_mels: 2, n_frames: 3, values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0] };
        assert_eq!(f.window(1, 2).unwrap().values, vec![2.0, 3.0, 5.0, 6.0]);
        assert!(f.window(2, 2).is_err());
        let floor = LOG_FLOOR.ln() as f32;
        assert_eq!(f.fit_frames(4).values, vec![1.0, 2.0, 3.0, floor, 4.0, 5.0, 6.0, floor]);
        assert_eq!(f.fit_frames(2).values, vec![1.0, 2.0, 4.0, 5.0]);
    }
}
