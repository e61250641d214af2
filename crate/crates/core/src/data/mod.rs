//! Audio files, dataset manifests and the synthetic scene generator.

mod manifest;
mod synth;
mod wav;

pub use manifest::{parse_manifest, render_manifest, scene_index, Manifest, ManifestRow, RowError, HEADER, SCENES};
pub use synth::{class_frequency, class_modulation_rate, synth_dataset, synth_manifest, synth_segment, SynthOptions};
pub use wav::{decode_wav, encode_wav_pcm16, read_wav, write_wav_pcm16};
