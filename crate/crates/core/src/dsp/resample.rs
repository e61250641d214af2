//! Mono mixdown, mean removal and Kaiser-windowed sinc resampling.

use crate::error::{Error, Result};

pub const TARGET_RATE: u32 = 22_050;
pub const KAISER_BETA: f64 = 8.6;
pub const ZERO_CROSSINGS: usize = 64;

/// Multichannel audio straight out of a decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct RawAudio {
    pub sample_rate: u32,
    /// One vector per channel, all the same length.
    pub channels: Vec<Vec<f64>>,
}

impl RawAudio {
    pub fn n_frames(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }
}

/// Mono signal at the analysis rate with its mean removed.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioSegment {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..500 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Rational resampler by `up / down`, one filter per output phase.
#[derive(Clone, Debug)]
pub struct Resampler {
    up: usize,
    down: usize,
    half: usize,
    /// `up` rows of `2 * half` taps; tap `j` weights input `i + 1 - half + j`
    /// where `i` is the input sample at or before the output instant.
    phases: Vec<Vec<f64>>,
}

impl Resampler {
    pub fn new(from: u32, to: u32) -> Result<Self> {
        if from == 0 || to == 0 {
            return Err(Error::Config("sample rates must be positive".into()));
        }
        let g = gcd(from as u64, to as u64);
        let (up, down) = ((to as u64 / g) as usize, (from as u64 / g) as usize);
        // Cutoff relative to the input Nyquist frequency.
        let cutoff = (up as f64 / down as f64).min(1.0);
        let reach = ZERO_CROSSINGS as f64 / cutoff;
        let half = reach.ceil() as usize + 1;
        let i0_beta = bessel_i0(KAISER_BETA);
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                (0..2 * half)
                    .map(|j| {
                        // Distance in input samples from the output instant.
                        let t = frac + half as f64 - 1.0 - j as f64;
                        let r = t / reach;
                        if r.abs() >= 1.0 {
                            return 0.0;
                        }
                        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta;
                        cutoff * sinc(cutoff * t) * window
                    })
                    .collect()
            })
            .collect();
        Ok(Self { up, down, half, phases })
    }

    /// Output length `ceil(n * up / down)`.
    pub fn output_len(&self, n: usize) -> usize {
        (n * self.up).div_ceil(self.down)
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        if self.up == 1 && self.down == 1 {
            return x.to_vec();
        }
        let n = x.len() as isize;
        (0..self.output_len(x.len()))
            .map(|m| {
                let pos = m * self.down;
                let (i, phase) = ((pos / self.up) as isize, pos % self.up);
                let first = i + 1 - self.half as isize;
                let taps = &self.phases[phase];
                let lo = (-first).max(0) as usize;
                let hi = ((n - first).max(0) as usize).min(taps.len());
                if lo >= hi {
                    return 0.0;
                }
                let start = (first + lo as isize) as usize;
                taps[lo..hi].iter().zip(&x[start..start + hi - lo]).map(|(h, v)| h * v).sum()
            })
            .collect()
    }
}

fn remove_mean(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

/// Averages channels to mono, subtracts the mean and resamples to
/// 22050 Hz. The mean is removed again after resampling, since the
/// filter's edge transients leave a small offset.
pub fn preprocess(raw: &RawAudio) -> Result<AudioSegment> {
    if !matches!(raw.sample_rate, 48_000 | 44_100 | 22_050) {
        return Err(Error::Config(format!("unsupported sample rate {} Hz (48000, 44100 or 22050)", raw.sample_rate)));
    }
    let n = raw.n_frames();
    if raw.channels.is_empty() || n == 0 {
        return Err(Error::Input("empty audio signal".into()));
    }
    if raw.channels.iter().any(|c| c.len() != n) {
        return Err(Error::Input("channels differ in length".into()));
    }
    let scale = 1.0 / raw.channels.len() as f64;
    let mut mono: Vec<f64> = (0..n).map(|i| raw.channels.iter().map(|c| c[i]).sum::<f64>() * scale).collect();
    remove_mean(&mut mono);
    let mut samples = Resampler::new(raw.sample_rate, TARGET_RATE)?.process(&mono);
    remove_mean(&mut samples);
    Ok(AudioSegment { samples, sample_rate: TARGET_RATE })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i0_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(8.6) / 750.461_159_563_165_9 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rates_reduce_to_small_ratios() {
        let r = Resampler::new(48_000, 22_050).unwrap();
        assert_eq!((r.up, r.down), (147, 320));
        assert_eq!(r.output_len(480_000), 220_500);
        let r = Resampler::new(44_100, 22_050).unwrap();
        assert_eq!((r.up, r.down), (1, 2));
    }

    #[test]
    fn passband_gain_is_unity() {
        let r = Resampler::new(48_000, 22_050).unwrap();
        for taps in &r.phases {
            let dc: f64 = taps.iter().sum();
            assert!((dc - 1.0).abs() < 1e-3, "{dc}");
        }
    }

    #[test]
    fn opposite_channels_cancel() {
        let left: Vec<f64> = (0..4800).map(|i| (i as f64 * 0.01).sin()).collect();
        let right = left.iter().map(|v| -v).collect();
        let seg = preprocess(&RawAudio { sample_rate: 48_000, channels: vec![left, right] }).unwrap();
        assert!(seg.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_signal_vanishes() {
        let seg = preprocess(&RawAudio { sample_rate: 22_050, channels: vec![vec![0.3; 1000]] }).unwrap();
        assert!(seg.samples.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(
            preprocess(&RawAudio { sample_rate: 16_000, channels: vec![vec![0.0; 10]] }),
            Err(Error::Config(_))
        ));
        assert!(matches!(preprocess(&RawAudio { sample_rate: 48_000, channels: vec![vec![]] }), Err(Error::Input(_))));
    }
}
