//! Finite-difference gradient checks: every differentiable op, every network
//! module, and the assembled model end to end.

use gelenet_core::backbone::{PyramidNormalizer, StubBackbone, DESK_STAGE_CHANNELS};
use gelenet_core::data::synth::{synthesize, SynthConfig};
use gelenet_core::data::batch_tensors;
use gelenet_core::dswsam::{AttentionVariant, DSwsam, GroupAttention, Swsam};
use gelenet_core::gradcheck::{check_gradients, GradCheckConfig, GradCheckOutcome};
use gelenet_core::init::Initializer;
use gelenet_core::ktm::{Ktm, KtmMode};
use gelenet_core::model::{GeleNet, ModelConfig};
use gelenet_core::predictor::{hybrid_loss, SaliencyPredictor};
use gelenet_core::backbone::FeatureExtractor;
use gelenet_core::{Shape, Tape, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn leaf(rng: &mut ChaCha8Rng, shape: Shape, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi)).requires_grad(true)
}

/// Random fixed projection so the scalar loss exercises every output entry
/// with distinct weights.
fn project(tape: &Tape, out: &Tensor, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = Tensor::from_fn(out.shape(), |_| rng.gen_range(-1.0..1.0));
    let weighted = tape.mul(out, &weights).unwrap();
    tape.sum_all(&weighted).unwrap()
}

fn assert_pass(outcome: GradCheckOutcome) {
    assert!(outcome.passed, "{}", outcome.line());
}

#[test]
fn elementwise_and_reduce_ops_pass_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let a = leaf(&mut rng, Shape::new(2, 3, 4, 4), -1.0, 1.0);
    let b = leaf(&mut rng, Shape::new(2, 3, 4, 4), 0.2, 1.5);
    let gate = leaf(&mut rng, Shape::new(1, 1, 4, 4), -1.0, 1.0);
    let scalar = leaf(&mut rng, Shape::new(1, 1, 1, 1), 0.3, 0.9);
    let cfg = GradCheckConfig::default();

    let cases: Vec<(&str, Box<dyn Fn(&Tape) -> gelenet_core::Result<Tensor>>)> = vec![
        ("add", Box::new(|t: &Tape| {
            let y = t.add(&a, &b)?;
            Ok(project(t, &y, 1))
        })),
        ("sub", Box::new(|t: &Tape| {
            let y = t.sub(&a, &b)?;
            Ok(project(t, &y, 2))
        })),
        ("mul_broadcast", Box::new(|t: &Tape| {
            let y = t.mul(&gate, &a)?;
            Ok(project(t, &y, 3))
        })),
        ("mul_scalar_broadcast", Box::new(|t: &Tape| {
            let y = t.mul(&scalar, &a)?;
            Ok(project(t, &y, 4))
        })),
        ("div", Box::new(|t: &Tape| {
            let y = t.div(&a, &b)?;
            Ok(project(t, &y, 5))
        })),
        ("relu", Box::new(|t: &Tape| {
            let y = t.relu(&a)?;
            Ok(project(t, &y, 6))
        })),
        ("sigmoid", Box::new(|t: &Tape| {
            let y = t.sigmoid(&a)?;
            Ok(project(t, &y, 7))
        })),
        ("ln", Box::new(|t: &Tape| {
            let y = t.ln(&b)?;
            Ok(project(t, &y, 8))
        })),
        ("sqrt", Box::new(|t: &Tape| {
            let y = t.sqrt(&b)?;
            Ok(project(t, &y, 9))
        })),
        ("affine", Box::new(|t: &Tape| {
            let y = t.affine(&a, -2.5, 0.3)?;
            Ok(project(t, &y, 10))
        })),
        ("clamp", Box::new(|t: &Tape| {
            // Bounds chosen away from sample values so FD stays two-sided.
            let y = t.clamp(&a, -2.0, 2.0)?;
            Ok(project(t, &y, 11))
        })),
        ("sum_all", Box::new(|t: &Tape| t.sum_all(&a))),
        ("mean_all", Box::new(|t: &Tape| t.mean_all(&a))),
        ("sum_per_image", Box::new(|t: &Tape| {
            let y = t.sum_per_image(&a)?;
            Ok(project(t, &y, 12))
        })),
        ("spatial_mean", Box::new(|t: &Tape| {
            let y = t.spatial_mean(&a)?;
            Ok(project(t, &y, 13))
        })),
        ("channel_max", Box::new(|t: &Tape| {
            let y = t.channel_max(&a)?;
            Ok(project(t, &y, 14))
        })),
        ("channel_mean", Box::new(|t: &Tape| {
            let y = t.channel_mean(&a)?;
            Ok(project(t, &y, 15))
        })),
        ("concat_split", Box::new(|t: &Tape| {
            let parts = t.split_channels(&a, &[1, 2])?;
            let back = t.concat_channels(&[parts[1].clone(), parts[0].clone()])?;
            Ok(project(t, &back, 16))
        })),
        ("permute_channels", Box::new(|t: &Tape| {
            let y = t.permute_channels(&a, &[2, 0, 1])?;
            Ok(project(t, &y, 17))
        })),
        ("reshape_transpose", Box::new(|t: &Tape| {
            let y = t.reshape(&a, Shape::new(2, 1, 3, 16))?;
            let z = t.transpose2d(&y)?;
            Ok(project(t, &z, 18))
        })),
        ("bilinear_upsample", Box::new(|t: &Tape| {
            let y = t.bilinear_upsample(&a, 2)?;
            Ok(project(t, &y, 19))
        })),
    ];
    for (name, forward) in cases {
        let tensors: Vec<(&str, &Tensor)> = vec![("a", &a), ("b", &b), ("gate", &gate), ("scalar", &scalar)];
        // Only check tensors that actually feed this case's loss.
        let used: Vec<(&str, &Tensor)> = tensors
            .into_iter()
            .filter(|(tname, _)| match name {
                "add" | "sub" | "div" => *tname == "a" || *tname == "b",
                "mul_broadcast" => *tname == "a" || *tname == "gate",
                "mul_scalar_broadcast" => *tname == "a" || *tname == "scalar",
                "ln" | "sqrt" => *tname == "b",
                _ => *tname == "a",
            })
            .collect();
        let outcome = check_gradients(name, &used, &forward, &cfg, None).unwrap();
        assert_pass(outcome);
    }
}

#[test]
fn conv_matmul_softmax_pass_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let x = leaf(&mut rng, Shape::new(2, 3, 6, 6), -1.0, 1.0);
    let w = leaf(&mut rng, Shape::new(4, 3, 3, 3), -0.6, 0.6);
    let b = leaf(&mut rng, Shape::new(1, 4, 1, 1), -0.2, 0.2);
    let cfg = GradCheckConfig::default();
    let outcome = check_gradients(
        "conv2d",
        &[("x", &x), ("w", &w), ("b", &b)],
        |t| {
            let y = t.conv2d(&x, &w, &b, 1, 1)?;
            Ok(project(t, &y, 20))
        },
        &cfg,
        None,
    )
    .unwrap();
    assert_pass(outcome);

    let outcome = check_gradients(
        "conv2d_strided",
        &[("x", &x), ("w", &w), ("b", &b)],
        |t| {
            let y = t.conv2d(&x, &w, &b, 2, 0)?;
            Ok(project(t, &y, 21))
        },
        &cfg,
        None,
    )
    .unwrap();
    assert_pass(outcome);

    let ma = leaf(&mut rng, Shape::new(2, 1, 3, 4), -1.0, 1.0);
    let mb = leaf(&mut rng, Shape::new(2, 1, 4, 5), -1.0, 1.0);
    let outcome = check_gradients(
        "matmul",
        &[("a", &ma), ("b", &mb)],
        |t| {
            let y = t.matmul(&ma, &mb)?;
            Ok(project(t, &y, 22))
        },
        &cfg,
        None,
    )
    .unwrap();
    assert_pass(outcome);

    let sx = leaf(&mut rng, Shape::new(1, 1, 4, 6), -2.0, 2.0);
    let outcome = check_gradients(
        "softmax_rows",
        &[("x", &sx)],
        |t| {
            let y = t.softmax_rows(&sx)?;
            Ok(project(t, &y, 23))
        },
        &cfg,
        None,
    )
    .unwrap();
    assert_pass(outcome);
}

#[test]
fn backbone_stub_passes_gradcheck() {
    // The extractor needs a multiple of 32; 32x32 is its smallest input and
    // keeps every internal feature at 8x8 or less.
    let mut init = Initializer::new(7);
    let stub = StubBackbone::new(&mut init, DESK_STAGE_CHANNELS);
    let norm = PyramidNormalizer::new(&mut init, DESK_STAGE_CHANNELS);
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let image = Tensor::from_fn(Shape::new(2, 3, 32, 32), |_| rng.gen_range(0.0..1.0))
        .requires_grad(true);
    let mut tensors: Vec<(String, Tensor)> = vec![("image".to_string(), image.clone())];
    for p in stub.params().into_iter().chain(norm.params()) {
        tensors.push((p.name.clone(), p.value.clone()));
    }
    let refs: Vec<(&str, &Tensor)> = tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let cfg = GradCheckConfig {
        samples_per_tensor: 6,
        ..GradCheckConfig::default()
    };
    let outcome = check_gradients(
        "backbone",
        &refs,
        |t| {
            let raw = stub.extract(t, &image)?;
            let pyr = norm.forward(t, &raw)?;
            let s1 = project(t, &pyr.f1, 30);
            let s2 = project(t, &pyr.f2, 31);
            let s3 = project(t, &pyr.f3, 32);
            let s4 = project(t, &pyr.f4, 33);
            let partial = t.add(&t.add(&s1, &s2)?, &s3)?;
            t.add(&partial, &s4)
        },
        &cfg,
        None,
    )
    .unwrap();
    assert_pass(outcome);
}

fn module_gradcheck<F>(name: &str, params: Vec<(&String, &Tensor)>, input: &Tensor, forward: F)
where
    F: Fn(&Tape) -> gelenet_core::Result<Tensor>,
{
    let mut tensors: Vec<(&str, &Tensor)> = vec![("input", input)];
    for (n, t) in &params {
        tensors.push((n.as_str(), t));
    }
    let cfg = GradCheckConfig {
        samples_per_tensor: 8,
        ..GradCheckConfig::default()
    };
    let outcome = check_gradients(name, &tensors, forward, &cfg, None).unwrap();
    assert_pass(outcome);
}

#[test]
fn dswsam_passes_gradcheck_in_every_variant() {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let input = leaf(&mut rng, Shape::new(2, 32, 6, 6), -1.0, 1.0);
    for (i, variant) in [
        AttentionVariant::Full,
        AttentionVariant::NoShuffle,
        AttentionVariant::NoWeights,
        AttentionVariant::PlainSa,
        AttentionVariant::Sge,
    ]
    .iter()
    .enumerate()
    {
        let mut init = Initializer::new(41 + i as u64);
        let module = DSwsam::new(&mut init, "m", *variant);
        let names: Vec<(String, Tensor)> = module
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        module_gradcheck(
            &format!("dswsam_{}", variant.name()),
            names.iter().map(|(n, t)| (n, t)).collect(),
            &input,
            |t| {
                let (out, _) = module.forward(t, &input)?;
                Ok(project(t, &out, 40))
            },
        );
    }
}

#[test]
fn swsam_passes_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let input = leaf(&mut rng, Shape::new(2, 32, 4, 4), -1.0, 1.0);
    let mut init = Initializer::new(17);
    let module = Swsam::new(&mut init, "m", AttentionVariant::Full);
    let names: Vec<(String, Tensor)> = module
        .params()
        .into_iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();
    module_gradcheck(
        "swsam",
        names.iter().map(|(n, t)| (n, t)).collect(),
        &input,
        |t| {
            let (out, _) = module.forward(t, &input)?;
            Ok(project(t, &out, 50))
        },
    );
}

#[test]
fn group_attention_gradcheck_on_plain_tensor() {
    let mut rng = ChaCha8Rng::seed_from_u64(550);
    let input = leaf(&mut rng, Shape::new(1, 32, 5, 5), -1.0, 1.0);
    let mut init = Initializer::new(23);
    let attn = GroupAttention::new(&mut init, "m", AttentionVariant::Full);
    let names: Vec<(String, Tensor)> = attn
        .params()
        .into_iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();
    module_gradcheck(
        "group_attention",
        names.iter().map(|(n, t)| (n, t)).collect(),
        &input,
        |t| {
            let (out, _) = attn.enhance(t, &input)?;
            Ok(project(t, &out, 55))
        },
    );
}

#[test]
fn ktm_passes_gradcheck_in_every_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let f2 = leaf(&mut rng, Shape::new(2, 32, 3, 3), -1.0, 1.0);
    let f3 = leaf(&mut rng, Shape::new(2, 32, 3, 3), -1.0, 1.0);
    for (i, mode) in [KtmMode::Full, KtmMode::SumOnly, KtmMode::ProductOnly]
        .iter()
        .enumerate()
    {
        let mut init = Initializer::new(60 + i as u64);
        let mut ktm = Ktm::new(&mut init, "ktm", 32, *mode);
        // Nonzero residual scalars so every path carries gradient.
        for p in ktm.params_mut() {
            if p.name.contains("gamma") {
                p.value.set_data(vec![0.37]).unwrap();
            }
        }
        let names: Vec<(String, Tensor)> = ktm
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        let mut tensors: Vec<(&str, &Tensor)> = vec![("f2", &f2), ("f3", &f3)];
        for (n, t) in &names {
            tensors.push((n.as_str(), t));
        }
        let cfg = GradCheckConfig {
            samples_per_tensor: 8,
            ..GradCheckConfig::default()
        };
        let outcome = check_gradients(
            &format!("ktm_{}", mode.name()),
            &tensors,
            |t| {
                let out = ktm.forward(t, &f2, &f3)?;
                Ok(project(t, &out.features, 60))
            },
            &cfg,
            None,
        )
        .unwrap();
        assert_pass(outcome);
    }
}

#[test]
fn predictor_and_loss_pass_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let low = leaf(&mut rng, Shape::new(2, 32, 8, 8), -1.0, 1.0);
    let mid = leaf(&mut rng, Shape::new(2, 32, 2, 2), -1.0, 1.0);
    let high = leaf(&mut rng, Shape::new(2, 32, 1, 1), -1.0, 1.0);
    let mask = Tensor::from_fn(Shape::new(2, 1, 32, 32), |i| ((i * 7) % 5 < 2) as u8 as f64);
    let mut init = Initializer::new(70);
    let pred = SaliencyPredictor::new(&mut init, "p", 32);
    let names: Vec<(String, Tensor)> = pred
        .params()
        .into_iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();
    let mut tensors: Vec<(&str, &Tensor)> = vec![("low", &low), ("mid", &mid), ("high", &high)];
    for (n, t) in &names {
        tensors.push((n.as_str(), t));
    }
    let cfg = GradCheckConfig {
        samples_per_tensor: 8,
        ..GradCheckConfig::default()
    };
    let outcome = check_gradients(
        "predictor_with_hybrid_loss",
        &tensors,
        |t| {
            let s = pred.decode(t, &low, &mid, &high)?;
            let full = pred.finalize(t, &s)?;
            hybrid_loss(t, &full, &mask)
        },
        &cfg,
        None,
    )
    .unwrap();
    assert_pass(outcome);
}

#[test]
fn hybrid_loss_gradient_wrt_prediction_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let pred = leaf(&mut rng, Shape::new(1, 1, 6, 6), 0.05, 0.95);
    let mask = Tensor::from_fn(Shape::new(1, 1, 6, 6), |i| ((i * 11) % 3 == 0) as u8 as f64);
    let cfg = GradCheckConfig {
        tolerance: 1e-4,
        samples_per_tensor: 36,
        ..GradCheckConfig::default()
    };
    let outcome = check_gradients(
        "hybrid_loss_wrt_prediction",
        &[("pred", &pred)],
        |t| hybrid_loss(t, &pred, &mask),
        &cfg,
        None,
    )
    .unwrap();
    assert_pass(outcome);
}

/// Full model on a 64x64 batch: every parameter checked on sampled
/// coordinates against central differences.
#[test]
fn full_model_gradcheck_on_64x64() {
    let model = GeleNet::new(&ModelConfig::full_desk(), 3).unwrap();
    let (samples, _) = synthesize(&SynthConfig {
        count: 1,
        seed: 9,
        ..SynthConfig::default()
    })
    .unwrap();
    let refs: Vec<&gelenet_core::data::Sample> = samples.iter().collect();
    let (images, masks) = batch_tensors(&refs).unwrap();
    let names: Vec<(String, Tensor)> = model
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();
    let tensors: Vec<(&str, &Tensor)> = names.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let cfg = GradCheckConfig {
        samples_per_tensor: 20,
        ..GradCheckConfig::default()
    };
    let outcome = check_gradients(
        "full_model",
        &tensors,
        |t| {
            let out = model.forward(t, &images)?;
            hybrid_loss(t, &out.full, &masks)
        },
        &cfg,
        None,
    )
    .unwrap();
    // 20 sampled coordinates per parameter, or every coordinate for
    // parameters smaller than that.
    let expected: usize = tensors.iter().map(|(_, t)| t.numel().min(20)).sum();
    assert_eq!(outcome.coords_checked, expected);
    assert_pass(outcome);
}
