//! Command implementations behind the `gelenet` binary: train, infer, eval,
//! gradcheck, and ablate, all driven by the flat key = value config format
//! with desk/paper presets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gelenet_core::config::ExperimentConfig;
use gelenet_core::data::imageio;
use gelenet_core::error::{Error, Result};
use gelenet_core::gradcheck::{module_suite, GradCheckConfig};
use gelenet_core::metrics::{self, MetricReport};
use gelenet_core::model::GeleNet;
use gelenet_core::train;
use gelenet_core::Tape;

/// Shared flags: preset first, then config file, then explicit overrides.
#[derive(Default, Clone)]
pub struct CommonArgs {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub preset: Option<String>,
}

pub fn resolve_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(preset) = &common.preset {
        cfg.apply_preset(preset)?;
    }
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_train(common: &CommonArgs) -> Result<()> {
    let cfg = resolve_config(common)?;
    let outcome = train::run(&cfg)?;
    println!(
        "trained {} iterations, final loss {:.6}, checkpoint {}",
        outcome.iterations,
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
        outcome.checkpoint.display()
    );
    println!(
        "training set: f_adp {:.4}, mae {:.4}, s_measure {:.4}",
        outcome.report.f_adp, outcome.report.mae, outcome.report.s_measure
    );
    Ok(())
}

fn collect_images(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().map(|e| e == "png").unwrap_or(false))
                .collect();
            entries.sort();
            files.append(&mut entries);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::Data("no input images".into()));
    }
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string()
}

pub fn cmd_infer(
    common: &CommonArgs,
    checkpoint: &Path,
    inputs: &[PathBuf],
    debug_maps: bool,
) -> Result<()> {
    let cfg = resolve_config(common)?;
    let mut model = GeleNet::new(&cfg.model_config(), cfg.seed)?;
    model.load_checkpoint(checkpoint)?;
    let out_dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    let size = cfg.input_size;
    for path in collect_images(inputs)? {
        let (rgb, h, w) = imageio::load_rgb(&path)?;
        let hw = h * w;
        let mut resized = Vec::with_capacity(3 * size * size);
        for ch in 0..3 {
            resized.extend(imageio::resize_bilinear(
                &rgb[ch * hw..(ch + 1) * hw],
                h,
                w,
                size,
                size,
            ));
        }
        let image = gelenet_core::Tensor::from_vec(
            gelenet_core::Shape::new(1, 3, size, size),
            resized,
        )?;
        let tape = Tape::inference();
        let name = stem(&path);
        let map = if debug_maps {
            let detail = model.forward_detail(&tape, &image)?;
            if let Some(a) = &detail.attention_low {
                let s = a.shape();
                imageio::save_gray(
                    &out_dir.join(format!("{name}_attention_low.png")),
                    &a.to_vec(),
                    s.h,
                    s.w,
                )?;
            }
            if let Some(a) = &detail.attention_high {
                let s = a.shape();
                imageio::save_gray(
                    &out_dir.join(format!("{name}_attention_high.png")),
                    &a.to_vec(),
                    s.h,
                    s.w,
                )?;
            }
            if let Some(c) = &detail.correlation {
                // Normalize by the largest entry so the heatmap is visible;
                // raw rows sum to 1 and individual entries are tiny.
                let s = c.shape();
                let data = c.to_vec();
                let peak = data.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
                let scaled: Vec<f64> = data.iter().map(|v| v / peak).collect();
                imageio::save_gray(
                    &out_dir.join(format!("{name}_correlation.png")),
                    &scaled,
                    s.h,
                    s.w,
                )?;
            }
            detail.full
        } else {
            model.forward(&tape, &image)?.full
        };
        // Back to the source resolution so outputs align with inputs.
        let restored = imageio::resize_bilinear(&map.to_vec(), size, size, h, w);
        imageio::save_gray(&out_dir.join(format!("{name}.png")), &restored, h, w)?;
    }
    Ok(())
}

/// Ground truth source for evaluation: a directory of mask PNGs or a manifest
/// whose second column names the masks.
fn gt_paths(gt: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    if gt.is_dir() {
        for entry in std::fs::read_dir(gt)? {
            let path = entry?.path();
            if path.extension().map(|e| e == "png").unwrap_or(false) {
                map.insert(stem(&path), path);
            }
        }
    } else {
        let text = std::fs::read_to_string(gt)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", gt.display())))?;
        let dir = gt.parent().unwrap_or(Path::new("."));
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mask_rel = line
                .split_once('\t')
                .map(|(_, m)| m)
                .ok_or_else(|| Error::Data(format!("bad manifest line '{line}'")))?;
            let path = dir.join(mask_rel.trim());
            map.insert(stem(&path), path);
        }
    }
    if map.is_empty() {
        return Err(Error::Data(format!("no ground truth found in {}", gt.display())));
    }
    Ok(map)
}

pub fn evaluate_pairs(pred_dir: &Path, gt: &Path) -> Result<Vec<(String, MetricReport)>> {
    let gts = gt_paths(gt)?;
    let mut preds = BTreeMap::new();
    for entry in std::fs::read_dir(pred_dir)? {
        let path = entry?.path();
        if path.extension().map(|e| e == "png").unwrap_or(false) {
            preds.insert(stem(&path), path);
        }
    }
    let unmatched_preds: Vec<&String> = preds.keys().filter(|k| !gts.contains_key(*k)).collect();
    let unmatched_gts: Vec<&String> = gts.keys().filter(|k| !preds.contains_key(*k)).collect();
    if !unmatched_preds.is_empty() || !unmatched_gts.is_empty() {
        return Err(Error::Data(format!(
            "unmatched files; predictions without ground truth: [{}], ground truth without predictions: [{}]",
            unmatched_preds.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
            unmatched_gts.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
        )));
    }

    let pairs: Vec<(String, PathBuf, PathBuf)> = preds
        .into_iter()
        .map(|(k, p)| {
            let g = gts[&k].clone();
            (k, p, g)
        })
        .collect();

    // Per-image evaluation parallelizes; GELENET_THREADS caps the pool.
    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Ok(n) = std::env::var("GELENET_THREADS") {
            if let Ok(n) = n.parse::<usize>() {
                builder = builder.num_threads(n.max(1));
            }
        }
        builder
            .build()
            .map_err(|e| Error::Data(format!("thread pool: {e}")))?
    };
    let results: Vec<Result<(String, MetricReport)>> = pool.install(|| {
        use rayon::prelude::*;
        pairs
            .par_iter()
            .map(|(name, pred_path, gt_path)| {
                let (mut pred, ph, pw) = imageio::load_gray(pred_path)?;
                let (gt_raw, gh, gw) = imageio::load_gray(gt_path)?;
                if (ph, pw) != (gh, gw) {
                    pred = imageio::resize_bilinear(&pred, ph, pw, gh, gw);
                }
                let gt: Vec<f64> = gt_raw
                    .into_iter()
                    .map(|v| if v >= 0.5 { 1.0 } else { 0.0 })
                    .collect();
                let report = metrics::evaluate(&pred, &gt, gh, gw)?;
                Ok((name.clone(), report))
            })
            .collect()
    });
    // Aggregation stays in name order regardless of completion order.
    results.into_iter().collect()
}

pub fn cmd_eval(common: &CommonArgs, pred_dir: &Path, gt: &Path) -> Result<()> {
    let out_dir = common
        .out
        .clone()
        .unwrap_or_else(|| pred_dir.join("evaluation"));
    std::fs::create_dir_all(&out_dir)?;
    let per_image = evaluate_pairs(pred_dir, gt)?;
    let mut csv = String::from(
        "image,s_measure,f_max,f_mean,f_adp,e_max,e_mean,e_adp,mae\n",
    );
    for (name, r) in &per_image {
        csv.push_str(&format!(
            "{name},{},{},{},{},{},{},{},{}\n",
            r.s_measure, r.f_max, r.f_mean, r.f_adp, r.e_max, r.e_mean, r.e_adp, r.mae
        ));
    }
    std::fs::write(out_dir.join("per_image.csv"), csv)?;
    let reports: Vec<MetricReport> = per_image.iter().map(|(_, r)| r.clone()).collect();
    let aggregate = metrics::aggregate(&reports)?;
    train::write_report_files(&out_dir, "aggregate", &aggregate)?;
    println!("{}", aggregate.to_text().trim_end());
    println!("evaluated {} images into {}", per_image.len(), out_dir.display());
    Ok(())
}

pub fn cmd_gradcheck(common: &CommonArgs, tolerance: f64) -> Result<()> {
    let seed = common.seed.unwrap_or(1);
    let cfg = GradCheckConfig {
        tolerance,
        samples_per_tensor: 6,
        seed,
        ..GradCheckConfig::default()
    };
    let outcomes = module_suite(&cfg)?;
    let mut all_passed = true;
    for outcome in &outcomes {
        println!("{}", outcome.line());
        all_passed &= outcome.passed;
    }
    if !all_passed {
        return Err(Error::Numerical(format!(
            "gradient check failed at tolerance {tolerance}"
        )));
    }
    Ok(())
}

/// Ablation grid: module combinations plus the component variants, matching
/// the experiment tables.
pub const ABLATION_VARIANTS: &[&str] = &[
    "baseline",
    "dswsam",
    "ktm",
    "swsam",
    "ktm+swsam",
    "dswsam+swsam",
    "dswsam+ktm",
    "full",
    "dswsam-both",
    "swsam-both",
    "no_shuffle",
    "no_weights",
    "plain_sa",
    "sge",
    "sum_only",
    "product_only",
];

pub fn variant_config(base: &ExperimentConfig, variant: &str) -> Result<ExperimentConfig> {
    use gelenet_core::dswsam::AttentionVariant;
    use gelenet_core::ktm::KtmMode;
    use gelenet_core::model::LevelEnhance;

    let mut cfg = base.clone();
    // Start from the full model and strip or swap modules.
    cfg.enhance_low = LevelEnhance::DSwsam;
    cfg.enhance_high = LevelEnhance::Swsam;
    cfg.ktm = Some(KtmMode::Full);
    cfg.attention_variant = AttentionVariant::Full;
    match variant {
        "baseline" => {
            cfg.enhance_low = LevelEnhance::Off;
            cfg.enhance_high = LevelEnhance::Off;
            cfg.ktm = None;
        }
        "dswsam" => {
            cfg.enhance_high = LevelEnhance::Off;
            cfg.ktm = None;
        }
        "ktm" => {
            cfg.enhance_low = LevelEnhance::Off;
            cfg.enhance_high = LevelEnhance::Off;
        }
        "swsam" => {
            cfg.enhance_low = LevelEnhance::Off;
            cfg.ktm = None;
        }
        "ktm+swsam" => cfg.enhance_low = LevelEnhance::Off,
        "dswsam+swsam" => cfg.ktm = None,
        "dswsam+ktm" => cfg.enhance_high = LevelEnhance::Off,
        "full" => {}
        "dswsam-both" => cfg.enhance_high = LevelEnhance::DSwsam,
        "swsam-both" => cfg.enhance_low = LevelEnhance::Swsam,
        "no_shuffle" => cfg.attention_variant = AttentionVariant::NoShuffle,
        "no_weights" => cfg.attention_variant = AttentionVariant::NoWeights,
        "plain_sa" => cfg.attention_variant = AttentionVariant::PlainSa,
        "sge" => cfg.attention_variant = AttentionVariant::Sge,
        "sum_only" => cfg.ktm = Some(KtmMode::SumOnly),
        "product_only" => cfg.ktm = Some(KtmMode::ProductOnly),
        other => {
            return Err(Error::Config(format!(
                "unknown ablation variant '{other}'; known: {}",
                ABLATION_VARIANTS.join(", ")
            )))
        }
    }
    Ok(cfg)
}

pub fn cmd_ablate(common: &CommonArgs, variants: &[String]) -> Result<()> {
    let base = resolve_config(common)?;
    let mut expanded: Vec<String> = Vec::new();
    for v in variants {
        if v == "pairwise" {
            expanded.extend(["ktm+swsam", "dswsam+swsam", "dswsam+ktm"].map(String::from));
        } else {
            expanded.push(v.clone());
        }
    }
    if expanded.is_empty() {
        return Err(Error::Config("no ablation variants given".into()));
    }
    let out_root = base.out_dir.clone();
    std::fs::create_dir_all(&out_root)?;
    let mut rows = Vec::new();
    for variant in &expanded {
        let mut cfg = variant_config(&base, variant)?;
        cfg.out_dir = out_root.join(variant.replace('+', "_"));
        let outcome = train::run(&cfg)?;
        println!(
            "{variant}: f_adp {:.4}, s_measure {:.4}, mae {:.4}",
            outcome.report.f_adp, outcome.report.s_measure, outcome.report.mae
        );
        rows.push((variant.clone(), outcome.report));
    }
    let mut csv =
        String::from("variant,s_measure,f_max,f_mean,f_adp,e_max,e_mean,e_adp,mae\n");
    let mut table = format!(
        "{:<16} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
        "variant", "s_measure", "f_max", "f_mean", "f_adp", "e_max", "e_mean", "e_adp", "mae"
    );
    for (name, r) in &rows {
        csv.push_str(&format!(
            "{name},{},{},{},{},{},{},{},{}\n",
            r.s_measure, r.f_max, r.f_mean, r.f_adp, r.e_max, r.e_mean, r.e_adp, r.mae
        ));
        table.push_str(&format!(
            "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            name, r.s_measure, r.f_max, r.f_mean, r.f_adp, r.e_max, r.e_mean, r.e_adp, r.mae
        ));
    }
    std::fs::write(out_root.join("ablation.csv"), csv)?;
    std::fs::write(out_root.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(())
}
