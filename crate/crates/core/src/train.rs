//! Training loop: seeded shuffling and augmentation, step-decayed Adam,
//! per-iteration loss trace, and end-of-run artifacts (checkpoint, loss CSV,
//! training-set metric report).

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DatasetSource, ExperimentConfig};
use crate::data::augment::{self, ALL_OPS};
use crate::data::manifest::load_manifest;
use crate::data::synth::synthesize;
use crate::data::{batch_tensors, Sample};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport};
use crate::model::GeleNet;
use crate::optim::Adam;
use crate::predictor::hybrid_loss;
use crate::tape::Tape;

pub struct TrainOutcome {
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub checkpoint: PathBuf,
    pub report: MetricReport,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Vec<Sample>> {
    Ok(load_dataset_with_meta(cfg)?.0)
}

pub fn load_dataset_with_meta(
    cfg: &ExperimentConfig,
) -> Result<(Vec<Sample>, Option<Vec<crate::data::synth::SampleMeta>>)> {
    match cfg.dataset {
        DatasetSource::Synthetic => {
            let (samples, metas) = synthesize(&cfg.synth_config())?;
            Ok((samples, Some(metas)))
        }
        DatasetSource::Manifest => {
            let path = cfg
                .manifest_path
                .as_ref()
                .ok_or_else(|| Error::Config("manifest_path not set".into()))?;
            Ok((load_manifest(path, cfg.input_size)?, None))
        }
    }
}

/// One optimization pass over a prepared batch. Returns the loss value.
pub fn train_step(
    model: &mut GeleNet,
    adam: &Adam,
    lr: f64,
    batch: &[&Sample],
) -> Result<f64> {
    let (images, masks) = batch_tensors(batch)?;
    let tape = Tape::new();
    let out = model.forward(&tape, &images)?;
    let loss = hybrid_loss(&tape, &out.full, &masks)?;
    let value = loss.item();
    if !value.is_finite() {
        return Err(Error::Numerical(format!("loss diverged to {value}")));
    }
    tape.backward(&loss)?;
    adam.step(lr, model.params_mut())?;
    Ok(value)
}

/// Full-resolution saliency maps for a set of samples, batch size 1,
/// no recording.
pub fn predict(model: &GeleNet, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    let mut maps = Vec::with_capacity(samples.len());
    for s in samples {
        let tape = Tape::inference();
        let (images, _) = batch_tensors(&[s])?;
        let out = model.forward(&tape, &images)?;
        maps.push(out.full.to_vec());
    }
    Ok(maps)
}

/// Per-image reports plus the aggregate over a sample set.
pub fn evaluate_model(
    model: &GeleNet,
    samples: &[Sample],
) -> Result<(Vec<MetricReport>, MetricReport)> {
    let maps = predict(model, samples)?;
    let mut reports = Vec::with_capacity(samples.len());
    for (s, map) in samples.iter().zip(&maps) {
        reports.push(metrics::evaluate(map, &s.mask, s.size, s.size)?);
    }
    let aggregate = metrics::aggregate(&reports)?;
    Ok((reports, aggregate))
}

pub fn write_report_files(dir: &Path, prefix: &str, report: &MetricReport) -> Result<()> {
    std::fs::write(dir.join(format!("{prefix}_report.txt")), report.to_text())?;
    std::fs::write(
        dir.join(format!("{prefix}_report.json")),
        serde_json::to_string_pretty(report)
            .map_err(|e| Error::Data(format!("report serialization failed: {e}")))?,
    )?;
    std::fs::write(dir.join(format!("{prefix}_pr_curve.csv")), report.pr_curve_csv())?;
    std::fs::write(dir.join(format!("{prefix}_f_curve.csv")), report.f_curve_csv())?;
    Ok(())
}

/// Train per the config and write artifacts into `cfg.out_dir`: resolved
/// config, checkpoint, per-iteration loss CSV, and the training-set report.
pub fn run(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("resolved.cfg"), cfg.to_text())?;

    let (samples, metas) = load_dataset_with_meta(cfg)?;
    if let Some(metas) = &metas {
        // Keep the generated scenes inspectable: PNG pairs, a manifest, and
        // the orientation sidecar next to the run's other artifacts.
        crate::data::manifest::write_dataset(&cfg.out_dir.join("dataset"), &samples, Some(metas))?;
    }
    let mut model = GeleNet::new(&cfg.model_config(), cfg.seed)?;
    let adam = Adam::default();
    // Separate stream for batch order and augmentation choices.
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED_BA7C));

    let mut loss_trace = Vec::new();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at_epoch(epoch);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch_storage: Vec<Sample> = Vec::with_capacity(chunk.len());
            for &i in chunk {
                if cfg.augment {
                    let op = ALL_OPS[order_rng.gen_range(0..ALL_OPS.len())];
                    batch_storage.push(augment::apply(op, &samples[i])?);
                } else {
                    batch_storage.push(samples[i].clone());
                }
            }
            let batch: Vec<&Sample> = batch_storage.iter().collect();
            let loss = train_step(&mut model, &adam, lr, &batch)?;
            loss_trace.push(loss);
        }
    }

    let mut csv = String::from("iteration,loss\n");
    for (i, l) in loss_trace.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(cfg.out_dir.join("loss.csv"), csv)?;

    let checkpoint = cfg.out_dir.join("checkpoint.gnt");
    model.save_checkpoint(&checkpoint)?;

    let (_, report) = evaluate_model(&model, &samples)?;
    write_report_files(&cfg.out_dir, "train", &report)?;

    Ok(TrainOutcome {
        iterations: loss_trace.len(),
        loss_trace,
        checkpoint,
        report,
    })
}
