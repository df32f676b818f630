//! Four-level feature extraction.
//!
//! The trainable stub stands in for a transformer backbone: four stages of
//! stride-2 patch-merging convolution pairs producing features at 1/4, 1/8,
//! 1/16, and 1/32 of the input resolution. Any extractor honoring those
//! stage shapes can be plugged in behind the `FeatureExtractor` trait; the
//! normalization step then unifies all stages to 32 channels and halves the
//! stage-2 resolution so levels 2 and 3 line up.

use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::optim::Parameter;
use crate::tape::Tape;
use crate::tensor::Tensor;

pub const PYRAMID_CHANNELS: usize = 32;

/// Raw per-stage channel widths for the desk-scale stub.
pub const DESK_STAGE_CHANNELS: [usize; 4] = [16, 32, 48, 64];
/// Stage widths matching the reference backbone preset.
pub const PAPER_STAGE_CHANNELS: [usize; 4] = [64, 128, 320, 512];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackboneConfig {
    pub input_size: usize,
    pub stage_channels: [usize; 4],
}

impl BackboneConfig {
    pub fn desk() -> Self {
        BackboneConfig {
            input_size: 64,
            stage_channels: DESK_STAGE_CHANNELS,
        }
    }

    pub fn paper() -> Self {
        BackboneConfig {
            input_size: 352,
            stage_channels: PAPER_STAGE_CHANNELS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.input_size % 32 != 0 {
            return Err(Error::Config(format!(
                "input_size must be a positive multiple of 32, got {}",
                self.input_size
            )));
        }
        Ok(())
    }
}

/// Raw stage outputs before channel normalization.
pub struct RawFeatures {
    pub stages: [Tensor; 4],
}

/// The four normalized levels: 32 channels each, with level 2 reduced to
/// level 3's resolution (H/16) and level 1 at H/4, level 4 at H/32.
pub struct FeaturePyramid {
    pub f1: Tensor,
    pub f2: Tensor,
    pub f3: Tensor,
    pub f4: Tensor,
}

impl FeaturePyramid {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("f1", &self.f1), ("f2", &self.f2), ("f3", &self.f3), ("f4", &self.f4)] {
            if t.shape().c != PYRAMID_CHANNELS {
                return Err(Error::shape(
                    "pyramid",
                    format!("{name} has {} channels, expected {PYRAMID_CHANNELS}", t.shape().c),
                ));
            }
        }
        if self.f2.shape() != self.f3.shape() {
            return Err(Error::shape(
                "pyramid",
                format!("f2 {} and f3 {} must match", self.f2.shape(), self.f3.shape()),
            ));
        }
        Ok(())
    }
}

/// Anything that can produce the four raw stages from a batch of images.
pub trait FeatureExtractor {
    fn extract(&self, tape: &Tape, image: &Tensor) -> Result<RawFeatures>;
    fn stage_channels(&self) -> [usize; 4];
    fn params_mut(&mut self) -> Vec<&mut Parameter>;
    fn params(&self) -> Vec<&Parameter>;
}

struct ConvBlock {
    weight: Parameter,
    bias: Parameter,
    stride: usize,
}

impl ConvBlock {
    fn new(init: &mut Initializer, name: &str, c_in: usize, c_out: usize, k: usize, stride: usize) -> Self {
        ConvBlock {
            weight: init.conv_weight(&format!("{name}/weight"), c_out, c_in, k, k, None),
            bias: init.conv_bias(&format!("{name}/bias"), c_out),
            stride,
        }
    }

    fn forward(&self, tape: &Tape, x: &Tensor, padding: usize) -> Result<Tensor> {
        tape.conv2d(x, &self.weight.value, &self.bias.value, self.stride, padding)
    }
}

/// The stub extractor: stage 1 applies two stride-2 convs (H -> H/4), the
/// remaining stages one stride-2 conv followed by a stride-1 conv. ReLU after
/// every convolution.
pub struct StubBackbone {
    stages: Vec<(ConvBlock, ConvBlock)>,
    stage_channels: [usize; 4],
}

impl StubBackbone {
    pub fn new(init: &mut Initializer, stage_channels: [usize; 4]) -> Self {
        let mut stages = Vec::with_capacity(4);
        let mut c_in = 3;
        for (i, &c_out) in stage_channels.iter().enumerate() {
            let second_stride = if i == 0 { 2 } else { 1 };
            let a = ConvBlock::new(init, &format!("backbone/stage{}/conv0", i + 1), c_in, c_out, 3, 2);
            let b = ConvBlock::new(
                init,
                &format!("backbone/stage{}/conv1", i + 1),
                c_out,
                c_out,
                3,
                second_stride,
            );
            stages.push((a, b));
            c_in = c_out;
        }
        StubBackbone {
            stages,
            stage_channels,
        }
    }
}

impl FeatureExtractor for StubBackbone {
    fn extract(&self, tape: &Tape, image: &Tensor) -> Result<RawFeatures> {
        let s = image.shape();
        if s.h != s.w {
            return Err(Error::shape(
                "extract",
                format!("input must be square, got {}x{}", s.h, s.w),
            ));
        }
        if s.h % 32 != 0 {
            return Err(Error::shape(
                "extract",
                format!("input size {} is not divisible by 32", s.h),
            ));
        }
        if s.c != 3 {
            return Err(Error::shape(
                "extract",
                format!("input must have 3 channels, got {}", s.c),
            ));
        }
        let mut x = image.clone();
        let mut outs: Vec<Tensor> = Vec::with_capacity(4);
        for (a, b) in &self.stages {
            x = tape.relu(&a.forward(tape, &x, 1)?)?;
            x = tape.relu(&b.forward(tape, &x, 1)?)?;
            outs.push(x.clone());
        }
        let [s1, s2, s3, s4]: [Tensor; 4] = outs.try_into().expect("four stages");
        Ok(RawFeatures {
            stages: [s1, s2, s3, s4],
        })
    }

    fn stage_channels(&self) -> [usize; 4] {
        self.stage_channels
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for (a, b) in &mut self.stages {
            out.push(&mut a.weight);
            out.push(&mut a.bias);
            out.push(&mut b.weight);
            out.push(&mut b.bias);
        }
        out
    }

    fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for (a, b) in &self.stages {
            out.push(&a.weight);
            out.push(&a.bias);
            out.push(&b.weight);
            out.push(&b.bias);
        }
        out
    }
}

/// Channel normalization to 32 plus the stage-2 resolution reduction
/// (a learned stride-2 3x3 convolution).
pub struct PyramidNormalizer {
    unify: Vec<ConvBlock>,
    reduce2: ConvBlock,
}

impl PyramidNormalizer {
    pub fn new(init: &mut Initializer, stage_channels: [usize; 4]) -> Self {
        let unify = stage_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                ConvBlock::new(init, &format!("normalize/level{}", i + 1), c, PYRAMID_CHANNELS, 1, 1)
            })
            .collect();
        let reduce2 = ConvBlock::new(
            init,
            "normalize/level2_reduce",
            PYRAMID_CHANNELS,
            PYRAMID_CHANNELS,
            3,
            2,
        );
        PyramidNormalizer { unify, reduce2 }
    }

    pub fn forward(&self, tape: &Tape, raw: &RawFeatures) -> Result<FeaturePyramid> {
        let f1 = self.unify[0].forward(tape, &raw.stages[0], 0)?;
        let f2_wide = self.unify[1].forward(tape, &raw.stages[1], 0)?;
        let f2 = self.reduce2.forward(tape, &f2_wide, 1)?;
        let f3 = self.unify[2].forward(tape, &raw.stages[2], 0)?;
        let f4 = self.unify[3].forward(tape, &raw.stages[3], 0)?;
        let pyramid = FeaturePyramid { f1, f2, f3, f4 };
        pyramid.validate()?;
        Ok(pyramid)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for block in &mut self.unify {
            out.push(&mut block.weight);
            out.push(&mut block.bias);
        }
        out.push(&mut self.reduce2.weight);
        out.push(&mut self.reduce2.bias);
        out
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for block in &self.unify {
            out.push(&block.weight);
            out.push(&block.bias);
        }
        out.push(&self.reduce2.weight);
        out.push(&self.reduce2.bias);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn run_stub(input: usize, channels: [usize; 4]) -> RawFeatures {
        let mut init = Initializer::new(0);
        let stub = StubBackbone::new(&mut init, channels);
        let tape = Tape::inference();
        let img = Tensor::full(Shape::new(1, 3, input, input), 0.5);
        stub.extract(&tape, &img).unwrap()
    }

    #[test]
    fn desk_stub_stage_shapes() {
        let raw = run_stub(64, DESK_STAGE_CHANNELS);
        let want = [(16, 16), (32, 8), (48, 4), (64, 2)];
        for (t, (c, s)) in raw.stages.iter().zip(want) {
            assert_eq!(t.shape(), Shape::new(1, c, s, s));
        }
    }

    #[test]
    fn paper_preset_stage_shapes() {
        let raw = run_stub(352, PAPER_STAGE_CHANNELS);
        let want = [(64, 88), (128, 44), (320, 22), (512, 11)];
        for (t, (c, s)) in raw.stages.iter().zip(want) {
            assert_eq!(t.shape(), Shape::new(1, c, s, s));
        }
    }

    #[test]
    fn zero_image_stays_finite() {
        let mut init = Initializer::new(3);
        let stub = StubBackbone::new(&mut init, DESK_STAGE_CHANNELS);
        let tape = Tape::inference();
        let img = Tensor::zeros(Shape::new(1, 3, 64, 64));
        let raw = stub.extract(&tape, &img).unwrap();
        for t in &raw.stages {
            assert!(t.iter_finite());
        }
    }

    #[test]
    fn non_divisible_input_rejected() {
        let mut init = Initializer::new(0);
        let stub = StubBackbone::new(&mut init, DESK_STAGE_CHANNELS);
        let tape = Tape::inference();
        let img = Tensor::zeros(Shape::new(1, 3, 48, 48));
        assert!(stub.extract(&tape, &img).is_err());
    }

    #[test]
    fn normalizer_produces_matching_mid_levels() {
        let mut init = Initializer::new(0);
        let stub = StubBackbone::new(&mut init, DESK_STAGE_CHANNELS);
        let norm = PyramidNormalizer::new(&mut init, DESK_STAGE_CHANNELS);
        let tape = Tape::inference();
        let img = Tensor::full(Shape::new(2, 3, 64, 64), 0.3);
        let raw = stub.extract(&tape, &img).unwrap();
        let pyr = norm.forward(&tape, &raw).unwrap();
        assert_eq!(pyr.f1.shape(), Shape::new(2, 32, 16, 16));
        assert_eq!(pyr.f2.shape(), Shape::new(2, 32, 4, 4));
        assert_eq!(pyr.f3.shape(), Shape::new(2, 32, 4, 4));
        assert_eq!(pyr.f4.shape(), Shape::new(2, 32, 2, 2));
    }

    #[test]
    fn identity_unify_kernel_passes_features_through() {
        // A 32-channel raw stage mapped by an identity-initialized 1x1 kernel.
        let mut init = Initializer::new(0);
        let norm = PyramidNormalizer::new(&mut init, [32, 32, 32, 32]);
        let eye = Tensor::from_fn(Shape::new(32, 32, 1, 1), |i| {
            if i / 32 == i % 32 {
                1.0
            } else {
                0.0
            }
        });
        norm.unify[2].weight.value.set_data(eye.to_vec()).unwrap();
        let tape = Tape::inference();
        let x = Tensor::from_fn(Shape::new(1, 32, 4, 4), |i| (i as f64 * 0.37).cos());
        let y = norm.unify[2].forward(&tape, &x, 0).unwrap();
        let (xd, yd) = (x.to_vec(), y.to_vec());
        for (a, b) in xd.iter().zip(&yd) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
