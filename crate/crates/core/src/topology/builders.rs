//! The VGG, LCNN and x-vector networks, layer by layer.
//!
//! Layer names follow the published tables; activation layers, which the
//! tables leave implicit, get names of their own.

use super::spec::{InputLayout, LayerKind, LayerSpec, NetworkSpec, NormAxis, Topology};
use crate::error::{Error, Result};
use crate::layers::Activation;

pub const N_MELS: usize = 256;
pub const N_CLASSES: usize = 10;
pub const DEFAULT_DROPOUT: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    /// Every hidden width is divided by this (1 = as published).
    pub width_divisor: usize,
    pub dropout_rate: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { width_divisor: 1, dropout_rate: DEFAULT_DROPOUT }
    }
}

struct Builder {
    div: usize,
    layers: Vec<LayerSpec>,
}

impl Builder {
    fn width(&self, published: usize) -> Result<usize> {
        if !published.is_multiple_of(self.div) || published / self.div < 2 {
            return Err(Error::Config(format!("width {published} cannot be divided by {}", self.div)));
        }
        Ok(published / self.div)
    }

    fn push(&mut self, name: impl Into<String>, kind: LayerKind) {
        self.layers.push(LayerSpec::new(name, kind));
    }

    fn conv(&mut self, name: String, k: usize, cin: usize, cout: usize) {
        self.push(name, LayerKind::Conv2d { kernel: [k, k], cin, cout });
    }

    fn act(&mut self, name: String, function: Activation) {
        self.push(name, LayerKind::Activation { function });
    }

    fn classifier_2d(&mut self, freq: usize, channels: usize) -> Result<()> {
        let hidden = self.width(256)?;
        self.push("AttentionPooling", LayerKind::AttentionPool { d: channels, use_std: false });
        self.push("Flatten", LayerKind::Flatten);
        self.push("Dense1", LayerKind::Dense { din: freq * channels, dout: hidden });
        self.act("ReLU-Dense1".into(), Activation::Relu);
        self.push("Dense2", LayerKind::Dense { din: hidden, dout: hidden });
        self.act("ReLU-Dense2".into(), Activation::Relu);
        self.push("Dense (softmax)", LayerKind::Dense { din: hidden, dout: N_CLASSES });
        self.push("Softmax", LayerKind::Softmax);
        Ok(())
    }

    fn finish(self, topology: Topology, input: InputLayout) -> Result<NetworkSpec> {
        let spec = NetworkSpec {
            topology,
            width_divisor: self.div,
            input,
            n_mels: N_MELS,
            n_classes: N_CLASSES,
            layers: self.layers,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn builder(opts: &BuildOptions) -> Result<Builder> {
    if opts.width_divisor == 0 {
        return Err(Error::Config("width divisor must be positive".into()));
    }
    if !(0.0..1.0).contains(&opts.dropout_rate) {
        return Err(Error::Config(format!("dropout rate {} outside [0, 1)", opts.dropout_rate)));
    }
    Ok(Builder { div: opts.width_divisor, layers: Vec::new() })
}

pub fn build(topology: Topology, opts: &BuildOptions) -> Result<NetworkSpec> {
    match topology {
        Topology::Vgg => build_vgg_with(opts),
        Topology::Lcnn => build_lcnn_with(opts),
        Topology::XVector => build_xvector_with(opts),
    }
}

pub fn build_vgg() -> NetworkSpec {
    build_vgg_with(&BuildOptions::default()).expect("published VGG is consistent")
}

pub fn build_lcnn() -> NetworkSpec {
    build_lcnn_with(&BuildOptions::default()).expect("published LCNN is consistent")
}

pub fn build_xvector() -> NetworkSpec {
    build_xvector_with(&BuildOptions::default()).expect("published x-vector is consistent")
}

/// Six blocks of two 3x3 convolutions (ReLU after each) and a 2x1
/// frequency pooling, then mean-only attention pooling and three dense
/// layers.
pub fn build_vgg_with(opts: &BuildOptions) -> Result<NetworkSpec> {
    let mut b = builder(opts)?;
    let mut cin = 1;
    for (block, published) in [32, 64, 128, 256, 256, 256].into_iter().enumerate() {
        let c = b.width(published)?;
        for k in 1..=2 {
            b.conv(format!("Conv2D-{}-{k}", block + 1), 3, cin, c);
            b.act(format!("ReLU-{}-{k}", block + 1), Activation::Relu);
            cin = c;
        }
        b.push(format!("MaxPooling-{}", block + 1), LayerKind::MaxPool);
    }
    b.classifier_2d(N_MELS >> 6, cin)?;
    b.finish(Topology::Vgg, InputLayout::FreqTimeChannel)
}

/// Light CNN: convolutions whose only nonlinearity is Max-Feature-Map,
/// with frequency-axis batch norm between the 1x1 and 3x3 stages.
pub fn build_lcnn_with(opts: &BuildOptions) -> Result<NetworkSpec> {
    let mut b = builder(opts)?;
    let c1 = b.width(32)?;
    b.conv("Conv2D-1-1".into(), 5, 1, c1);
    b.push("MFM-1-1", LayerKind::Mfm);
    b.push("MaxPooling-1", LayerKind::MaxPool);

    // (block, 1x1 width, 3x3 width), published channel counts before MFM
    let stages = [(2, 32, 64), (3, 64, 128), (4, 96, 128), (5, 128, 160), (6, 192, 192)];
    let mut cin = c1 / 2;
    let mut freq = N_MELS / 2;
    for (bn_index, (block, w1, w3)) in stages.into_iter().enumerate() {
        let (w1, w3) = (b.width(w1)?, b.width(w3)?);
        b.conv(format!("Conv2D-{block}-1"), 1, cin, w1);
        b.push(format!("MFM-{block}-1"), LayerKind::Mfm);
        b.push(format!("BatchNorm-{}", bn_index + 1), LayerKind::BatchNorm { axis: NormAxis::Frequency, len: freq });
        b.conv(format!("Conv2D-{block}-2"), 3, w1 / 2, w3);
        b.push(format!("MFM-{block}-2"), LayerKind::Mfm);
        b.push(format!("MaxPooling-{block}"), LayerKind::MaxPool);
        cin = w3 / 2;
        freq /= 2;
    }
    b.classifier_2d(freq, cin)?;
    b.finish(Topology::Lcnn, InputLayout::FreqTimeChannel)
}

/// Temporal-context 1D CNN (conv, ReLU, batch norm, dropout per layer),
/// mean+std attention pooling, then two leaky-ReLU dense layers.
pub fn build_xvector_with(opts: &BuildOptions) -> Result<NetworkSpec> {
    let mut b = builder(opts)?;
    let rate = opts.dropout_rate;
    let frame = b.width(256)?;
    let wide = b.width(768)?;
    let contexts: [(&[isize], usize); 6] = [
        (&[-2, -1, 0, 1, 2], frame),
        (&[-2, 0, 2], frame),
        (&[-3, 0, 3], frame),
        (&[-4, 0, 4], frame),
        (&[0], frame),
        (&[0], wide),
    ];
    let mut cin = N_MELS;
    for (i, (offsets, cout)) in contexts.into_iter().enumerate() {
        let n = i + 1;
        b.push(format!("Conv1D-{n}"), LayerKind::Conv1d { offsets: offsets.to_vec(), cin, cout });
        b.act(format!("ReLU-{n}"), Activation::Relu);
        b.push(format!("BatchNorm-{n}"), LayerKind::BatchNorm { axis: NormAxis::Feature, len: cout });
        b.push(format!("Dropout-{n}"), LayerKind::Dropout { rate });
        cin = cout;
    }
    b.push("AttentionPooling", LayerKind::AttentionPool { d: wide, use_std: true });
    let hidden = b.width(256)?;
    b.push("Dense1", LayerKind::Dense { din: 2 * wide, dout: hidden });
    b.act("LeakyReLU-Dense1".into(), Activation::leaky());
    b.push("BatchNorm-7", LayerKind::BatchNorm { axis: NormAxis::Feature, len: hidden });
    b.push("Dropout-7", LayerKind::Dropout { rate });
    b.push("Dense2", LayerKind::Dense { din: hidden, dout: hidden });
    b.act("LeakyReLU-Dense2".into(), Activation::leaky());
    b.push("BatchNorm-8", LayerKind::BatchNorm { axis: NormAxis::Feature, len: hidden });
    b.push("Dense3 (softmax)", LayerKind::Dense { din: hidden, dout: N_CLASSES });
    b.push("Softmax", LayerKind::Softmax);
    b.finish(Topology::XVector, InputLayout::TimeFeature)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape_of(spec: &NetworkSpec, name: &str) -> Vec<usize> {
        let idx = spec.layers.iter().position(|l| l.name == name).unwrap();
        spec.shapes(128).unwrap()[idx].clone()
    }

    #[test]
    fn vgg_landmarks() {
        let vgg = build_vgg();
        assert_eq!(shape_of(&vgg, "MaxPooling-6"), vec![4, 128, 256]);
        assert_eq!(shape_of(&vgg, "Flatten"), vec![1024]);
        assert_eq!(vgg.layer("Conv2D-2-2").unwrap().param_count(), 36_928);
        assert_eq!(vgg.layer("Conv2D-1-1").unwrap().param_count(), 320);
        assert_eq!(vgg.layer("Dense2").unwrap().param_count(), 65_792);
    }

    #[test]
    fn lcnn_landmarks() {
        let lcnn = build_lcnn();
        assert_eq!(lcnn.layer("Conv2D-1-1").unwrap().param_count(), 832);
        assert_eq!(shape_of(&lcnn, "MFM-6-2"), vec![8, 128, 96]);
        assert_eq!(shape_of(&lcnn, "Flatten"), vec![384]);
        assert_eq!(lcnn.layer("BatchNorm-2").unwrap().param_count(), 256);
    }

    #[test]
    fn xvector_landmarks() {
        let xv = build_xvector();
        assert_eq!(xv.layer("Conv1D-1").unwrap().param_count(), 327_936);
        assert_eq!(shape_of(&xv, "AttentionPooling"), vec![1536]);
        assert_eq!(xv.layer("Dense1").unwrap().param_count(), 393_472);
        assert_eq!(xv.layer("Conv1D-5").unwrap().param_count(), 65_792);
    }

    #[test]
    fn any_length_input_chains() {
        for spec in [build_vgg(), build_lcnn(), build_xvector()] {
            for n in [128, 512, 37] {
                assert_eq!(spec.shapes(n).unwrap().last().unwrap(), &vec![N_CLASSES]);
            }
        }
    }

    #[test]
    fn quarter_width_builds() {
        let opts = BuildOptions { width_divisor: 4, ..Default::default() };
        for t in Topology::ALL {
            let spec = build(t, &opts).unwrap();
            assert!(spec.total_params() * 8 < build(t, &BuildOptions::default()).unwrap().total_params());
        }
        let lcnn = build(Topology::Lcnn, &opts).unwrap();
        assert_eq!(shape_of(&lcnn, "Flatten"), vec![96]);
    }

    #[test]
    fn hash_tracks_structure() {
        let a = build_vgg();
        let b = build(Topology::Vgg, &BuildOptions { width_divisor: 4, ..Default::default() }).unwrap();
        assert_eq!(a.hash(), build_vgg().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
