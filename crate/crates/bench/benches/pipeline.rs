use criterion::{black_box, criterion_group, criterion_main, Criterion};
use gelenet_bench::{desk_fixture, random_tensor};
use gelenet_core::dswsam::{AttentionVariant, DSwsam};
use gelenet_core::init::Initializer;
use gelenet_core::ktm::{Ktm, KtmMode};
use gelenet_core::metrics;
use gelenet_core::predictor::hybrid_loss;
use gelenet_core::{Adam, Shape, Tape};

fn bench_conv(c: &mut Criterion) {
    let x = random_tensor(1, Shape::new(4, 32, 16, 16), -1.0, 1.0);
    let w = random_tensor(2, Shape::new(32, 32, 3, 3), -0.3, 0.3);
    let b = random_tensor(3, Shape::new(1, 32, 1, 1), -0.1, 0.1);
    c.bench_function("conv2d_3x3_32c_16px_batch4", |bench| {
        bench.iter(|| {
            let tape = Tape::inference();
            black_box(tape.conv2d(&x, &w, &b, 1, 1).unwrap())
        })
    });
}

fn bench_attention(c: &mut Criterion) {
    let mut init = Initializer::new(7);
    let dswsam = DSwsam::new(&mut init, "bench", AttentionVariant::Full);
    let f1 = random_tensor(4, Shape::new(1, 32, 16, 16), -1.0, 1.0);
    c.bench_function("dswsam_forward_16px", |bench| {
        bench.iter(|| {
            let tape = Tape::inference();
            black_box(dswsam.forward(&tape, &f1).unwrap())
        })
    });

    let mut init = Initializer::new(8);
    let ktm = Ktm::new(&mut init, "bench", 32, KtmMode::Full);
    let f2 = random_tensor(5, Shape::new(1, 32, 8, 8), -1.0, 1.0);
    let f3 = random_tensor(6, Shape::new(1, 32, 8, 8), -1.0, 1.0);
    c.bench_function("ktm_forward_8px", |bench| {
        bench.iter(|| {
            let tape = Tape::inference();
            black_box(ktm.forward(&tape, &f2, &f3).unwrap())
        })
    });
}

fn bench_model(c: &mut Criterion) {
    let (mut model, images, masks) = desk_fixture();
    c.bench_function("model_forward_64px_batch4", |bench| {
        bench.iter(|| {
            let tape = Tape::inference();
            black_box(model.forward(&tape, &images).unwrap())
        })
    });
    let adam = Adam::default();
    c.bench_function("train_step_64px_batch4", |bench| {
        bench.iter(|| {
            let tape = Tape::new();
            let out = model.forward(&tape, &images).unwrap();
            let loss = hybrid_loss(&tape, &out.full, &masks).unwrap();
            tape.backward(&loss).unwrap();
            adam.step(1e-4, model.params_mut()).unwrap();
        })
    });
}

fn bench_metrics(c: &mut Criterion) {
    let pred: Vec<f64> = (0..64 * 64).map(|i| ((i * 31) % 997) as f64 / 996.0).collect();
    let gt: Vec<f64> = (0..64 * 64).map(|i| ((i / 64) > 20 && (i % 64) < 40) as u8 as f64).collect();
    c.bench_function("metric_report_64px", |bench| {
        bench.iter(|| black_box(metrics::evaluate(&pred, &gt, 64, 64).unwrap()))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_conv, bench_attention, bench_model, bench_metrics
}
criterion_main!(benches);
