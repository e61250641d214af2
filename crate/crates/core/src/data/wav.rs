//! RIFF/WAVE decoding (PCM16, PCM24, float32) and PCM16 encoding.

use std::path::Path;

use crate::dsp::RawAudio;
use crate::error::{read_file, write_file, Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Encoding {
    Pcm16,
    Pcm24,
    Float32,
}

impl Encoding {
    fn width(self) -> usize {
        match self {
            Encoding::Pcm16 => 2,
            Encoding::Pcm24 => 3,
            Encoding::Float32 => 4,
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&self, at: usize, len: usize, what: &str) -> Result<&[u8]> {
        at.checked_add(len)
            .and_then(|end| self.bytes.get(at..end))
            .ok_or_else(|| Error::format(self.bytes.len().min(at), format!("truncated {what}")))
    }

    fn u16(&self, at: usize, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(at, 2, what)?.try_into().unwrap()))
    }

    fn u32(&self, at: usize, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(at, 4, what)?.try_into().unwrap()))
    }
}

/// Decodes a WAV file to per-channel samples in `[-1, 1]`.
pub fn decode_wav(bytes: &[u8]) -> Result<RawAudio> {
    let r = Reader { bytes };
    if r.take(0, 4, "RIFF header")? != b"RIFF" {
        return Err(Error::format(0, "not a RIFF file"));
    }
    if r.take(8, 4, "RIFF header")? != b"WAVE" {
        return Err(Error::format(8, "RIFF form is not WAVE"));
    }
    let mut at = 12;
    let mut format: Option<(Encoding, usize, u32)> = None;
    loop {
        let id = r.take(at, 4, "chunk header")?;
        let size = r.u32(at + 4, "chunk header")? as usize;
        let body = at + 8;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::format(at + 4, format!("fmt chunk of {size} bytes is too short")));
                }
                r.take(body, size, "fmt chunk")?;
                let mut tag = r.u16(body, "fmt chunk")?;
                let channels = r.u16(body + 2, "fmt chunk")? as usize;
                let rate = r.u32(body + 4, "fmt chunk")?;
                let bits = r.u16(body + 14, "fmt chunk")?;
                if tag == FORMAT_EXTENSIBLE {
                    if size < 40 {
                        return Err(Error::format(at + 4, "extensible fmt chunk is too short"));
                    }
                    tag = r.u16(body + 24, "fmt chunk")?;
                }
                let enc = match (tag, bits) {
                    (FORMAT_PCM, 16) => Encoding::Pcm16,
                    (FORMAT_PCM, 24) => Encoding::Pcm24,
                    (FORMAT_FLOAT, 32) => Encoding::Float32,
                    _ => return Err(Error::format(body, format!("unsupported codec (format tag {tag}, {bits} bits)"))),
                };
                if !(1..=2).contains(&channels) {
                    return Err(Error::format(body + 2, format!("{channels} channels (1 or 2 supported)")));
                }
                if rate == 0 {
                    return Err(Error::format(body + 4, "zero sample rate"));
                }
                format = Some((enc, channels, rate));
            }
            b"data" => {
                let (enc, n_ch, rate) = format.ok_or_else(|| Error::format(at, "data chunk before fmt chunk"))?;
                let data = r.take(body, size, "data chunk")?;
                let frame = enc.width() * n_ch;
                if !size.is_multiple_of(frame) {
                    return Err(Error::format(body + size - size % frame, "data ends mid-frame"));
                }
                let n = size / frame;
                let mut channels = vec![Vec::with_capacity(n); n_ch];
                for f in data.chunks_exact(frame) {
                    for (c, s) in f.chunks_exact(enc.width()).enumerate() {
                        channels[c].push(match enc {
                            Encoding::Pcm16 => i16::from_le_bytes([s[0], s[1]]) as f64 / 32_768.0,
                            Encoding::Pcm24 => (i32::from_le_bytes([0, s[0], s[1], s[2]]) >> 8) as f64 / 8_388_608.0,
                            Encoding::Float32 => f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64,
                        });
                    }
                }
                return Ok(RawAudio { sample_rate: rate, channels });
            }
            _ => {}
        }
        // Chunks are padded to even length.
        at = body + size + (size & 1);
        if at >= bytes.len() {
            return Err(Error::format(bytes.len(), "no data chunk"));
        }
    }
}

/// Encodes to PCM16, rounding and clipping to the 16-bit range.
pub fn encode_wav_pcm16(audio: &RawAudio) -> Result<Vec<u8>> {
    let n_ch = audio.channels.len();
    let n = audio.n_frames();
    if n_ch == 0 || n_ch > 2 || audio.channels.iter().any(|c| c.len() != n) {
        return Err(Error::Input(format!("cannot encode {n_ch} channels of unequal or zero count")));
    }
    let data_len = n * n_ch * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&(n_ch as u16).to_le_bytes());
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * n_ch as u32 * 2).to_le_bytes());
    out.extend_from_slice(&(n_ch as u16 * 2).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..n {
        for c in &audio.channels {
            let q = (c[i] * 32_768.0).round().clamp(-32_768.0, 32_767.0) as i16;
            out.extend_from_slice(&q.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_wav(path: &Path) -> Result<RawAudio> {
    decode_wav(&read_file(path)?).map_err(|e| e.context(path.display()))
}

pub fn write_wav_pcm16(path: &Path, audio: &RawAudio) -> Result<()> {
    write_file(path, &encode_wav_pcm16(audio)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(tag: u16, channels: u16, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut v = b"RIFF\0\0\0\0WAVEfmt ".to_vec();
        v.extend_from_slice(&16u32.to_le_bytes());
        v.extend_from_slice(&tag.to_le_bytes());
        v.extend_from_slice(&channels.to_le_bytes());
        v.extend_from_slice(&48_000u32.to_le_bytes());
        v.extend_from_slice(&0u32.to_le_bytes());
        v.extend_from_slice(&0u16.to_le_bytes());
        v.extend_from_slice(&bits.to_le_bytes());
        v.extend_from_slice(b"data");
        v.extend_from_slice(&(data.len() as u32).to_le_bytes());
        v.extend_from_slice(data);
        v
    }

    #[test]
    fn pcm16_extremes() {
        let data: Vec<u8> = [32_767i16, -32_768, 0].iter().flat_map(|v| v.to_le_bytes()).collect();
        let a = decode_wav(&header(1, 1, 16, &data)).unwrap();
        assert_eq!(a.channels[0], vec![32_767.0 / 32_768.0, -1.0, 0.0]);
    }

    #[test]
    fn pcm24_and_float() {
        let a = decode_wav(&header(1, 1, 24, &[0xff, 0xff, 0x7f, 0x00, 0x00, 0x80])).unwrap();
        assert_eq!(a.channels[0], vec![8_388_607.0 / 8_388_608.0, -1.0]);
        let a = decode_wav(&header(3, 2, 32, &[0.5f32.to_le_bytes(), (-0.25f32).to_le_bytes()].concat())).unwrap();
        assert_eq!(a.channels, vec![vec![0.5], vec![-0.25]]);
    }

    #[test]
    fn errors_carry_offsets() {
        let good = header(1, 1, 16, &[0, 0, 1, 0]);
        assert!(matches!(decode_wav(&good[..good.len() - 1]), Err(Error::Format { offset: 44, .. })));
        assert!(matches!(decode_wav(&header(2, 1, 4, &[])), Err(Error::Format { offset: 20, .. })));
        assert!(matches!(decode_wav(b"RIFX"), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode_wav(b"RIF"), Err(Error::Format { .. })));
    }

    #[test]
    fn encode_decode_keeps_length_and_rate() {
        let audio = RawAudio { sample_rate: 44_100, channels: vec![vec![0.1, -0.2, 1.5], vec![0.0, 0.3, -2.0]] };
        let back = decode_wav(&encode_wav_pcm16(&audio).unwrap()).unwrap();
        assert_eq!((back.sample_rate, back.n_frames()), (44_100, 3));
        assert_eq!(back.channels[0][2], 32_767.0 / 32_768.0);
        assert_eq!(back.channels[1][2], -1.0);
    }
}
