//! The backbone slot is pluggable: a caller-supplied extractor honoring the
//! four stage shapes drops in with no downstream changes.

use gelenet_core::backbone::{FeatureExtractor, RawFeatures};
use gelenet_core::data::batch_tensors;
use gelenet_core::data::synth::{synthesize, SynthConfig};
use gelenet_core::model::{GeleNet, ModelConfig};
use gelenet_core::predictor::hybrid_loss;
use gelenet_core::train::train_step;
use gelenet_core::{Adam, Parameter, Result, Shape, Tape, Tensor};

/// Parameter-free extractor: per-stage box-filter downsampling of the image,
/// mapped to the stage widths by fixed 1/k^2 kernels.
struct PoolingExtractor {
    kernels: Vec<(Tensor, Tensor, usize)>,
    channels: [usize; 4],
}

impl PoolingExtractor {
    fn new(channels: [usize; 4]) -> Self {
        let mut kernels = Vec::new();
        for (i, &c) in channels.iter().enumerate() {
            let k = 2usize.pow(i as u32 + 2);
            let weight = Tensor::full(Shape::new(c, 3, k, k), 1.0 / (3 * k * k) as f64);
            let bias = Tensor::zeros(Shape::new(1, c, 1, 1));
            kernels.push((weight, bias, k));
        }
        PoolingExtractor { kernels, channels }
    }
}

impl FeatureExtractor for PoolingExtractor {
    fn extract(&self, tape: &Tape, image: &Tensor) -> Result<RawFeatures> {
        let mut stages = Vec::with_capacity(4);
        for (weight, bias, k) in &self.kernels {
            stages.push(tape.conv2d(image, weight, bias, *k, 0)?);
        }
        let [a, b, c, d]: [Tensor; 4] = stages.try_into().expect("four stages");
        Ok(RawFeatures {
            stages: [a, b, c, d],
        })
    }

    fn stage_channels(&self) -> [usize; 4] {
        self.channels
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        Vec::new()
    }

    fn params(&self) -> Vec<&Parameter> {
        Vec::new()
    }
}

#[test]
fn custom_extractor_runs_the_unchanged_downstream_path() {
    let config = ModelConfig::full_desk();
    let channels = config.backbone.stage_channels;
    let mut custom =
        GeleNet::with_extractor(&config, Box::new(PoolingExtractor::new(channels)), 3).unwrap();
    let stock = GeleNet::new(&config, 3).unwrap();

    let (samples, _) = synthesize(&SynthConfig {
        count: 2,
        seed: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    let refs: Vec<_> = samples.iter().collect();
    let (images, masks) = batch_tensors(&refs).unwrap();

    // Same output contract as the stub-backed model.
    let tape = Tape::inference();
    let a = custom.forward(&tape, &images).unwrap();
    let b = stock.forward(&tape, &images).unwrap();
    assert_eq!(a.full.shape(), b.full.shape());
    assert_eq!(a.initial.shape(), b.initial.shape());
    assert!(a.full.to_vec().iter().all(|&v| (0.0..=1.0).contains(&v)));

    // The extractor has no parameters; the downstream modules still train.
    let before = custom
        .params()
        .iter()
        .map(|p| p.value.to_vec())
        .collect::<Vec<_>>();
    let adam = Adam::default();
    let loss = train_step(&mut custom, &adam, 1e-3, &refs).unwrap();
    assert!(loss.is_finite());
    let after = custom
        .params()
        .iter()
        .map(|p| p.value.to_vec())
        .collect::<Vec<_>>();
    assert_ne!(before, after, "downstream parameters should move");

    // Gradients flow end to end through the fixed extractor as well.
    let tape = Tape::new();
    let out = custom.forward(&tape, &images).unwrap();
    let loss = hybrid_loss(&tape, &out.full, &masks).unwrap();
    tape.backward(&loss).unwrap();
    for p in custom.params() {
        assert!(p.value.grad_vec().is_some(), "missing grad for {}", p.name);
    }
}
