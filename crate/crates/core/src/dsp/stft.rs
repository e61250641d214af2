//! Framed power spectra.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const N_FFT: usize = 2048;
pub const HOP: usize = 430;
pub const N_BINS: usize = N_FFT / 2 + 1;

/// Row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Periodic Hamming window, `0.54 - 0.46 cos(2 pi n / N)`.
pub fn hamming(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

/// Index into a signal of length `len` reflected about its end samples
/// (the edge sample is not repeated).
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    (if m < len as isize { m } else { period - m }) as usize
}

/// Number of frames for `n` samples: `floor(n / hop) + 1`.
pub fn frame_count(n: usize) -> usize {
    n / HOP + 1
}

/// Power spectrogram `[N_BINS x T]` with frame `t` centred on sample
/// `t * HOP`, reflect padding at both ends.
pub fn stft_power(samples: &[f64]) -> Result<Matrix> {
    if samples.len() < HOP {
        return Err(Error::Input(format!("signal of {} samples is shorter than one hop ({HOP})", samples.len())));
    }
    let n_frames = frame_count(samples.len());
    let window = hamming(N_FFT);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(N_FFT);
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Matrix::zeros(N_BINS, n_frames);
    let half = (N_FFT / 2) as isize;
    for t in 0..n_frames {
        let start = (t * HOP) as isize - half;
        for (k, slot) in buf.iter_mut().enumerate() {
            let v = samples[reflect(start + k as isize, samples.len())];
            *slot = Complex::new(v * window[k], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (bin, c) in buf[..N_BINS].iter().enumerate() {
            out.data[bin * n_frames + t] = c.norm_sqr();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_skips_the_edge() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }

    #[test]
    fn ten_second_segment_frames() {
        assert_eq!(frame_count(220_500), 513);
    }

    #[test]
    fn silence_has_no_power() {
        let s = stft_power(&vec![0.0; 5000]).unwrap();
        assert_eq!((s.rows, s.cols), (N_BINS, 12));
        assert!(s.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_signal_is_rejected() {
        assert!(matches!(stft_power(&[0.0; 429]), Err(Error::Input(_))));
    }

    #[test]
    fn window_is_periodic() {
        let w = hamming(8);
        assert!((w[0] - 0.08).abs() < 1e-15);
        assert!((w[4] - 1.0).abs() < 1e-15);
        assert!((w[1] - w[7]).abs() < 1e-15);
    }
}
