//! Feature pipeline against closed-form and brute-force references.

use std::f64::consts::PI;

use asc_core::dsp::{
    decode_features, default_filterbank, encode_features, extract, hamming, log_mel, log_mel_matrix, preprocess,
    read_features, stft_power, write_features, AudioSegment, RawAudio, Resampler, HOP, LOG_FLOOR, N_BINS, N_FFT,
    TARGET_RATE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

fn sine(freq: f64, rate: u32, seconds: f64, amp: f64) -> Vec<f64> {
    let n = (rate as f64 * seconds) as usize;
    (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
}

fn peak_bin(x: &[f64]) -> usize {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    (0..buf.len() / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap()
}

/// Slaney mel scale written out independently of the crate.
fn slaney_centers(n_mels: usize, sr: f64) -> Vec<f64> {
    let to_mel = |f: f64| if f < 1000.0 { 3.0 * f / 200.0 } else { 15.0 + 27.0 * (f / 1000.0).ln() / 6.4f64.ln() };
    let to_hz = |m: f64| if m < 15.0 { 200.0 * m / 3.0 } else { 1000.0 * (6.4f64.ln() * (m - 15.0) / 27.0).exp() };
    let top = to_mel(sr / 2.0);
    (1..=n_mels).map(|i| to_hz(top * i as f64 / (n_mels + 1) as f64)).collect()
}

#[test]
fn resampled_tone_keeps_its_frequency() {
    for rate in [48_000, 44_100, 22_050] {
        let x = sine(1000.0, rate, 2.0, 0.5);
        let y = Resampler::new(rate, TARGET_RATE).unwrap().process(&x);
        let expected = 1000.0 * y.len() as f64 / TARGET_RATE as f64;
        let got = peak_bin(&y) as f64;
        assert!((got - expected).abs() <= 1.0, "{rate} Hz: peak bin {got}, expected {expected}");
    }
}

#[test]
fn resampler_rejects_aliasing_band() {
    // 15 kHz lies above the 11.025 kHz output Nyquist and must be removed.
    let x = sine(15_000.0, 48_000, 1.0, 1.0);
    let y = Resampler::new(48_000, TARGET_RATE).unwrap().process(&x);
    let mid = &y[2000..y.len() - 2000];
    let rms = (mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt();
    assert!(rms < 1e-3, "residual rms {rms}");
}

#[test]
fn impulse_spectrum_is_the_window_value() {
    // A unit impulse centred in frame t has a flat spectrum of height w[N/2]^2.
    let mut x = vec![0.0; 20 * HOP];
    let t = 10;
    x[t * HOP] = 1.0;
    let p = stft_power(&x).unwrap();
    let w = hamming(N_FFT)[N_FFT / 2];
    for bin in 0..N_BINS {
        assert!((p.at(bin, t) - w * w).abs() < 1e-12);
    }
}

#[test]
fn spectrogram_obeys_parseval() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..30 * HOP).map(|_| rng.random_range(-1.0..1.0)).collect();
    let p = stft_power(&x).unwrap();
    let w = hamming(N_FFT);
    for t in [4, 10, 20] {
        let start = t * HOP - N_FFT / 2;
        let energy: f64 = (0..N_FFT).map(|k| (x[start + k] * w[k]).powi(2)).sum();
        let spectral: f64 =
            (0..N_BINS).map(|b| if b == 0 || b == N_BINS - 1 { p.at(b, t) } else { 2.0 * p.at(b, t) }).sum::<f64>()
                / N_FFT as f64;
        assert!((energy - spectral).abs() < 1e-9 * energy, "frame {t}: {energy} vs {spectral}");
    }
}

#[test]
fn ten_seconds_at_48k_give_the_full_feature_map() {
    let raw = RawAudio { sample_rate: 48_000, channels: vec![sine(440.0, 48_000, 10.0, 0.3); 2] };
    let f = extract(&raw).unwrap();
    assert_eq!((f.n_mels, f.n_frames), (256, 512));
    assert_eq!(f.values.len(), 256 * 512);
}

#[test]
fn silence_maps_to_the_log_floor() {
    let raw = RawAudio { sample_rate: 48_000, channels: vec![vec![0.0; 480_000]] };
    let f = extract(&raw).unwrap();
    let floor = LOG_FLOOR.ln() as f32;
    assert!(f.values.iter().all(|&v| v == floor));
}

#[test]
fn doubling_amplitude_adds_ln_four() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f64> = (0..44_100).map(|_| rng.random_range(-0.5..0.5)).collect();
    let fb = default_filterbank(256, TARGET_RATE as f64).unwrap();
    let seg = |scale: f64| AudioSegment { samples: x.iter().map(|v| v * scale).collect(), sample_rate: TARGET_RATE };
    let a = log_mel_matrix(&seg(1.0), &fb).unwrap();
    let b = log_mel_matrix(&seg(2.0), &fb).unwrap();
    let ln4 = 4f64.ln();
    for (u, v) in a.data.iter().zip(&b.data) {
        assert!(*u > LOG_FLOOR.ln() + 10.0);
        assert!((v - u - ln4).abs() < 1e-6, "{u} -> {v}");
    }
}

#[test]
fn one_kilohertz_lands_in_the_nearest_band() {
    let centers = slaney_centers(256, TARGET_RATE as f64);
    let want = (0..256).min_by(|&a, &b| (centers[a] - 1000.0).abs().total_cmp(&(centers[b] - 1000.0).abs())).unwrap();
    let raw = RawAudio { sample_rate: 48_000, channels: vec![sine(1000.0, 48_000, 10.0, 0.5)] };
    let f = extract(&raw).unwrap();
    let frame = 256;
    let got = (0..256).max_by(|&a, &b| f.at(a, frame).total_cmp(&f.at(b, frame))).unwrap();
    assert!(got.abs_diff(want) <= 1, "band {got}, nearest centre {want}");
}

#[test]
fn preprocessing_mixes_to_mono() {
    let left = sine(500.0, 44_100, 1.0, 0.4);
    let raw = RawAudio { sample_rate: 44_100, channels: vec![left.clone(), left.iter().map(|v| -v).collect()] };
    let seg = preprocess(&raw).unwrap();
    assert!(seg.samples.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn cached_features_round_trip_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..22_050 * 3).map(|_| rng.random_range(-0.3..0.3)).collect();
    let f = log_mel(&AudioSegment { samples: x, sample_rate: TARGET_RATE }).unwrap();
    let back = decode_features(&encode_features(&f)).unwrap();
    assert!(f.values.iter().zip(&back.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seg.ascf");
    write_features(&path, &f).unwrap();
    assert_eq!(read_features(&path).unwrap(), f);
}
