//! Fixture builders shared by the benchmarks.

use gelenet_core::config::ExperimentConfig;
use gelenet_core::data::{batch_tensors, Sample};
use gelenet_core::model::GeleNet;
use gelenet_core::train::load_dataset;
use gelenet_core::{Shape, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(seed: u64, shape: Shape, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Desk-scale full model plus one synthetic training batch.
pub fn desk_fixture() -> (GeleNet, Tensor, Tensor) {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_preset("desk").unwrap();
    cfg.synth_count = 4;
    let samples = load_dataset(&cfg).unwrap();
    let refs: Vec<&Sample> = samples.iter().collect();
    let (images, masks) = batch_tensors(&refs).unwrap();
    let model = GeleNet::new(&cfg.model_config(), 0).unwrap();
    (model, images, masks)
}
