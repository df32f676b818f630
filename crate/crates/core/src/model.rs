//! Full network assembly: backbone + normalization, per-level enhancement,
//! mid-level fusion, and the saliency predictor, with every module switchable
//! for the ablation grid. With all modules off the model degenerates to the
//! baseline: raw f1/f4 into the decoder and plain f2 + f3 fusion.

use crate::backbone::{
    BackboneConfig, FeatureExtractor, FeaturePyramid, PyramidNormalizer, StubBackbone,
};
use crate::checkpoint;
use crate::dswsam::{AttentionVariant, DSwsam, Swsam};
use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::ktm::{Ktm, KtmMode};
use crate::optim::Parameter;
use crate::predictor::SaliencyPredictor;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Which enhancement runs on a pyramid level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevelEnhance {
    DSwsam,
    Swsam,
    Off,
}

impl LevelEnhance {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "dswsam" => LevelEnhance::DSwsam,
            "swsam" => LevelEnhance::Swsam,
            "none" | "off" => LevelEnhance::Off,
            other => {
                return Err(Error::Config(format!(
                    "unknown enhancement '{other}' (expected dswsam, swsam, none)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LevelEnhance::DSwsam => "dswsam",
            LevelEnhance::Swsam => "swsam",
            LevelEnhance::Off => "none",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub enhance_low: LevelEnhance,
    pub enhance_high: LevelEnhance,
    pub ktm: Option<KtmMode>,
    pub attention_variant: AttentionVariant,
}

impl ModelConfig {
    pub fn full_desk() -> Self {
        ModelConfig {
            backbone: BackboneConfig::desk(),
            enhance_low: LevelEnhance::DSwsam,
            enhance_high: LevelEnhance::Swsam,
            ktm: Some(KtmMode::Full),
            attention_variant: AttentionVariant::Full,
        }
    }

    pub fn baseline_desk() -> Self {
        ModelConfig {
            backbone: BackboneConfig::desk(),
            enhance_low: LevelEnhance::Off,
            enhance_high: LevelEnhance::Off,
            ktm: None,
            attention_variant: AttentionVariant::Full,
        }
    }
}

enum Enhancer {
    DSwsam(DSwsam),
    Swsam(Swsam),
    Off,
}

impl Enhancer {
    fn build(
        init: &mut Initializer,
        which: LevelEnhance,
        prefix: &str,
        variant: AttentionVariant,
    ) -> Enhancer {
        match which {
            LevelEnhance::DSwsam => Enhancer::DSwsam(DSwsam::new(init, prefix, variant)),
            LevelEnhance::Swsam => Enhancer::Swsam(Swsam::new(init, prefix, variant)),
            LevelEnhance::Off => Enhancer::Off,
        }
    }

    fn forward(&self, tape: &Tape, x: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        match self {
            Enhancer::DSwsam(m) => m.forward(tape, x),
            Enhancer::Swsam(m) => m.forward(tape, x),
            Enhancer::Off => Ok((x.clone(), None)),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Enhancer::DSwsam(m) => m.params_mut(),
            Enhancer::Swsam(m) => m.params_mut(),
            Enhancer::Off => Vec::new(),
        }
    }

    fn params(&self) -> Vec<&Parameter> {
        match self {
            Enhancer::DSwsam(m) => m.params(),
            Enhancer::Swsam(m) => m.params(),
            Enhancer::Off => Vec::new(),
        }
    }
}

pub struct GeleNet {
    pub config: ModelConfig,
    extractor: Box<dyn FeatureExtractor>,
    normalizer: PyramidNormalizer,
    low: Enhancer,
    mid: Option<Ktm>,
    high: Enhancer,
    predictor: SaliencyPredictor,
}

/// Saliency output: the initial quarter-resolution map and the full map.
pub struct ForwardOutput {
    pub initial: Tensor,
    pub full: Tensor,
}

/// Everything interesting from one pass, for shape checks and debug export.
pub struct ForwardDetail {
    pub pyramid: FeaturePyramid,
    pub f_low: Tensor,
    pub f_mid: Tensor,
    pub f_high: Tensor,
    pub attention_low: Option<Tensor>,
    pub attention_high: Option<Tensor>,
    pub correlation: Option<Tensor>,
    pub initial: Tensor,
    pub full: Tensor,
}

impl GeleNet {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<GeleNet> {
        config.backbone.validate()?;
        let mut init = Initializer::new(seed);
        let extractor = Box::new(StubBackbone::new(&mut init, config.backbone.stage_channels));
        GeleNet::assemble(config, extractor, &mut init)
    }

    /// Same network with a caller-supplied extractor; downstream modules are
    /// identical, which is what makes the backbone pluggable.
    pub fn with_extractor(
        config: &ModelConfig,
        extractor: Box<dyn FeatureExtractor>,
        seed: u64,
    ) -> Result<GeleNet> {
        let mut init = Initializer::new(seed);
        GeleNet::assemble(config, extractor, &mut init)
    }

    fn assemble(
        config: &ModelConfig,
        extractor: Box<dyn FeatureExtractor>,
        init: &mut Initializer,
    ) -> Result<GeleNet> {
        let normalizer = PyramidNormalizer::new(init, extractor.stage_channels());
        let low = Enhancer::build(init, config.enhance_low, "low", config.attention_variant);
        let mid = config.ktm.map(|mode| Ktm::new(init, "ktm", 32, mode));
        let high = Enhancer::build(init, config.enhance_high, "high", config.attention_variant);
        let predictor = SaliencyPredictor::new(init, "predictor", 32);
        let model = GeleNet {
            config: config.clone(),
            extractor,
            normalizer,
            low,
            mid,
            high,
            predictor,
        };
        model.check_unique_names()?;
        Ok(model)
    }

    fn check_unique_names(&self) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for p in self.params() {
            if !names.insert(p.name.clone()) {
                return Err(Error::Config(format!("duplicate parameter name '{}'", p.name)));
            }
        }
        Ok(())
    }

    pub fn forward(&self, tape: &Tape, images: &Tensor) -> Result<ForwardOutput> {
        let d = self.forward_detail(tape, images)?;
        Ok(ForwardOutput {
            initial: d.initial,
            full: d.full,
        })
    }

    pub fn forward_detail(&self, tape: &Tape, images: &Tensor) -> Result<ForwardDetail> {
        {
            let data = images.data();
            if data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Data("input pixels must lie in [0,1]".into()));
            }
        }
        let raw = self.extractor.extract(tape, images)?;
        let pyramid = self.normalizer.forward(tape, &raw)?;
        let (f_low, attention_low) = self.low.forward(tape, &pyramid.f1)?;
        let (f_mid, correlation) = match &self.mid {
            Some(ktm) => {
                let out = ktm.forward(tape, &pyramid.f2, &pyramid.f3)?;
                (out.features, Some(out.correlation))
            }
            None => (tape.add(&pyramid.f2, &pyramid.f3)?, None),
        };
        let (f_high, attention_high) = self.high.forward(tape, &pyramid.f4)?;
        let initial = self.predictor.decode(tape, &f_low, &f_mid, &f_high)?;
        let full = self.predictor.finalize(tape, &initial)?;
        Ok(ForwardDetail {
            pyramid,
            f_low,
            f_mid,
            f_high,
            attention_low,
            attention_high,
            correlation,
            initial,
            full,
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.extractor.params_mut();
        out.append(&mut self.normalizer.params_mut());
        out.append(&mut self.low.params_mut());
        if let Some(ktm) = &mut self.mid {
            out.append(&mut ktm.params_mut());
        }
        out.append(&mut self.high.params_mut());
        out.append(&mut self.predictor.params_mut());
        out
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = self.extractor.params();
        out.append(&mut self.normalizer.params());
        out.append(&mut self.low.params());
        if let Some(ktm) = &self.mid {
            out.append(&mut ktm.params());
        }
        out.append(&mut self.high.params());
        out.append(&mut self.predictor.params());
        out
    }

    pub fn save_checkpoint(&self, path: &std::path::Path) -> Result<()> {
        checkpoint::save(path, &self.params())
    }

    pub fn load_checkpoint(&mut self, path: &std::path::Path) -> Result<()> {
        let mut params = self.params_mut();
        checkpoint::load(path, &mut params)
    }

    pub fn zero_grads(&self) {
        for p in self.params() {
            p.value.zero_grad();
        }
    }
}
