//! Experiment configuration: a flat key = value text format with an include
//! mechanism, strict unknown-key rejection, and desk/paper presets.

use std::path::{Path, PathBuf};

use crate::backbone::BackboneConfig;
use crate::data::synth::{ShapeKind, SynthConfig};
use crate::dswsam::AttentionVariant;
use crate::error::{Error, Result};
use crate::ktm::KtmMode;
use crate::model::{LevelEnhance, ModelConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetSource {
    Synthetic,
    Manifest,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub input_size: usize,
    pub stage_channels: [usize; 4],
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_period: usize,
    pub seed: u64,
    pub augment: bool,
    pub enhance_low: LevelEnhance,
    pub enhance_high: LevelEnhance,
    pub ktm: Option<KtmMode>,
    pub attention_variant: AttentionVariant,
    pub dataset: DatasetSource,
    pub manifest_path: Option<PathBuf>,
    pub synth_count: usize,
    pub synth_objects_min: usize,
    pub synth_objects_max: usize,
    pub synth_high_contrast_prob: f64,
    pub synth_seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    /// Training protocol defaults (45 epochs, batch 8, lr 1e-4 decaying by
    /// 0.1 every 30 epochs) over desk-scale sizes.
    fn default() -> Self {
        ExperimentConfig {
            input_size: 64,
            stage_channels: [16, 32, 48, 64],
            epochs: 45,
            batch_size: 8,
            base_lr: 1e-4,
            lr_decay_factor: 0.1,
            lr_decay_period: 30,
            seed: 0,
            augment: true,
            enhance_low: LevelEnhance::DSwsam,
            enhance_high: LevelEnhance::Swsam,
            ktm: Some(KtmMode::Full),
            attention_variant: AttentionVariant::Full,
            dataset: DatasetSource::Synthetic,
            manifest_path: None,
            synth_count: 8,
            synth_objects_min: 1,
            synth_objects_max: 2,
            synth_high_contrast_prob: 0.7,
            synth_seed: None,
            out_dir: PathBuf::from("gelenet_out"),
        }
    }
}

/// Desk-scale overfit preset: 8 synthetic 64x64 images, no augmentation,
/// a decay period far beyond the run so the base rate holds throughout.
pub const DESK_PRESET: &str = "\
input_size = 64
backbone_channels = 16,32,48,64
epochs = 300
batch_size = 8
base_lr = 1e-4
lr_decay_period = 100000
augment = false
dataset = synthetic
synth_count = 8
";

/// Reference-scale preset; expects a manifest for the dataset.
pub const PAPER_PRESET: &str = "\
input_size = 352
backbone_channels = 64,128,320,512
epochs = 45
batch_size = 8
base_lr = 1e-4
lr_decay_factor = 0.1
lr_decay_period = 30
augment = true
dataset = manifest
";

impl ExperimentConfig {
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let text = match name {
            "desk" => DESK_PRESET,
            "paper" => PAPER_PRESET,
            other => {
                return Err(Error::Config(format!(
                    "unknown preset '{other}' (expected desk or paper)"
                )))
            }
        };
        self.apply_text(text, Path::new("."), 0)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_file_depth(path, 0)
    }

    fn apply_file_depth(&mut self, path: &Path, depth: usize) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        self.apply_text(&text, &dir, depth)
    }

    /// Apply `key = value` lines in order. `include <path>` splices another
    /// file relative to the current one; later keys win.
    pub fn apply_text(&mut self, text: &str, dir: &Path, depth: usize) -> Result<()> {
        if depth > 8 {
            return Err(Error::Config("config includes nested too deeply".into()));
        }
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("include ") {
                self.apply_file_depth(&dir.join(rest.trim()), depth + 1)?;
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
            })?;
            self.set(key.trim(), value.trim(), dir)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str, dir: &Path) -> Result<()> {
        fn int(v: &str) -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("'{v}' is not an integer")))
        }
        fn real(v: &str) -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Config(format!("'{v}' is not a number")))
        }
        fn boolean(v: &str) -> Result<bool> {
            match v {
                "true" | "on" | "yes" => Ok(true),
                "false" | "off" | "no" => Ok(false),
                _ => Err(Error::Config(format!("'{v}' is not a boolean"))),
            }
        }
        match key {
            "input_size" => self.input_size = int(value)?,
            "backbone_channels" => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|p| int(p.trim()))
                    .collect::<Result<_>>()?;
                if parts.len() != 4 {
                    return Err(Error::Config(format!(
                        "backbone_channels needs 4 entries, got {}",
                        parts.len()
                    )));
                }
                self.stage_channels = [parts[0], parts[1], parts[2], parts[3]];
            }
            "epochs" => self.epochs = int(value)?,
            "batch_size" => self.batch_size = int(value)?,
            "base_lr" => self.base_lr = real(value)?,
            "lr_decay_factor" => self.lr_decay_factor = real(value)?,
            "lr_decay_period" => self.lr_decay_period = int(value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::Config(format!("'{value}' is not a seed")))?
            }
            "augment" => self.augment = boolean(value)?,
            "enhance_low" => self.enhance_low = LevelEnhance::parse(value)?,
            "enhance_high" => self.enhance_high = LevelEnhance::parse(value)?,
            "ktm" => {
                self.ktm = match value {
                    "off" | "none" => None,
                    mode => Some(KtmMode::parse(mode)?),
                }
            }
            "attention_variant" => self.attention_variant = AttentionVariant::parse(value)?,
            "dataset" => {
                self.dataset = match value {
                    "synthetic" => DatasetSource::Synthetic,
                    "manifest" => DatasetSource::Manifest,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown dataset source '{other}' (expected synthetic or manifest)"
                        )))
                    }
                }
            }
            "manifest_path" => self.manifest_path = Some(dir.join(value)),
            "synth_count" => self.synth_count = int(value)?,
            "synth_objects_min" => self.synth_objects_min = int(value)?,
            "synth_objects_max" => self.synth_objects_max = int(value)?,
            "synth_high_contrast_prob" => self.synth_high_contrast_prob = real(value)?,
            "synth_seed" => {
                self.synth_seed = Some(
                    value
                        .parse()
                        .map_err(|_| Error::Config(format!("'{value}' is not a seed")))?,
                )
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            unknown => return Err(Error::Config(format!("unknown config key '{unknown}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.input_size % 32 != 0 {
            return Err(Error::Config(format!(
                "input_size must be a positive multiple of 32, got {}",
                self.input_size
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.base_lr <= 0.0 {
            return Err(Error::Config("base_lr must be positive".into()));
        }
        if self.lr_decay_period == 0 {
            return Err(Error::Config("lr_decay_period must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.synth_high_contrast_prob) {
            return Err(Error::Config("synth_high_contrast_prob must lie in [0,1]".into()));
        }
        if self.synth_objects_min == 0 || self.synth_objects_min > self.synth_objects_max {
            return Err(Error::Config("synthetic object range is invalid".into()));
        }
        if self.dataset == DatasetSource::Manifest && self.manifest_path.is_none() {
            return Err(Error::Config("dataset = manifest requires manifest_path".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            backbone: BackboneConfig {
                input_size: self.input_size,
                stage_channels: self.stage_channels,
            },
            enhance_low: self.enhance_low,
            enhance_high: self.enhance_high,
            ktm: self.ktm,
            attention_variant: self.attention_variant,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.synth_seed.unwrap_or(self.seed),
            count: self.synth_count,
            size: self.input_size,
            objects_min: self.synth_objects_min,
            objects_max: self.synth_objects_max,
            shapes: vec![ShapeKind::Rectangle, ShapeKind::Ellipse, ShapeKind::Line],
            high_contrast_prob: self.synth_high_contrast_prob,
        }
    }

    /// Learning rate for one epoch under step decay.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.base_lr * self.lr_decay_factor.powi((epoch / self.lr_decay_period) as i32)
    }

    /// Serialized resolved configuration, reparseable by `apply_text`.
    pub fn to_text(&self) -> String {
        let ktm = match self.ktm {
            Some(mode) => mode.name(),
            None => "off",
        };
        let mut out = format!(
            "input_size = {}\nbackbone_channels = {},{},{},{}\nepochs = {}\nbatch_size = {}\nbase_lr = {}\nlr_decay_factor = {}\nlr_decay_period = {}\nseed = {}\naugment = {}\nenhance_low = {}\nenhance_high = {}\nktm = {}\nattention_variant = {}\n",
            self.input_size,
            self.stage_channels[0],
            self.stage_channels[1],
            self.stage_channels[2],
            self.stage_channels[3],
            self.epochs,
            self.batch_size,
            self.base_lr,
            self.lr_decay_factor,
            self.lr_decay_period,
            self.seed,
            self.augment,
            self.enhance_low.name(),
            self.enhance_high.name(),
            ktm,
            self.attention_variant.name(),
        );
        match self.dataset {
            DatasetSource::Synthetic => {
                out.push_str(&format!(
                    "dataset = synthetic\nsynth_count = {}\nsynth_objects_min = {}\nsynth_objects_max = {}\nsynth_high_contrast_prob = {}\n",
                    self.synth_count,
                    self.synth_objects_min,
                    self.synth_objects_max,
                    self.synth_high_contrast_prob
                ));
                if let Some(s) = self.synth_seed {
                    out.push_str(&format!("synth_seed = {s}\n"));
                }
            }
            DatasetSource::Manifest => {
                out.push_str("dataset = manifest\n");
                if let Some(p) = &self.manifest_path {
                    out.push_str(&format!("manifest_path = {}\n", p.display()));
                }
            }
        }
        out
    }
}
