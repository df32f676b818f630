//! Shuffle-weighted spatial attention (SWSAM) and its direction-aware
//! variant (D-SWSAM).
//!
//! D-SWSAM first runs four directional convolutions (horizontal, vertical,
//! leading diagonal, reverse diagonal; 5-tap line kernels, 8 output channels
//! each) and concatenates them. A channel shuffle with four groups then
//! interleaves the directions, the shuffled tensor is split into four
//! 8-channel subsets, a spatial attention map is computed per subset, and the
//! maps are fused through a learnable convex combination followed by a
//! convolution and sigmoid. The fused map gates the shuffled features with a
//! residual: out = (a x f) + f. SWSAM is the same pipeline without the
//! directional unit, applied to the highest-level features.

use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::optim::Parameter;
use crate::tape::Tape;
use crate::tensor::{Shape, Tensor};

pub const GROUPS: usize = 4;
const CHANNELS: usize = 32;
const DIR_KERNEL: usize = 5;
const DIR_OUT: usize = 8;

/// The four line directions of the directional convolution unit, in the
/// concatenation order of the output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Horizontal,
    Vertical,
    LeadingDiagonal,
    ReverseDiagonal,
}

pub const DIRECTIONS: [Direction; 4] = [
    Direction::Horizontal,
    Direction::Vertical,
    Direction::LeadingDiagonal,
    Direction::ReverseDiagonal,
];

/// 5x5 line support for one direction: 1.0 on the line, 0.0 elsewhere.
pub fn direction_mask(dir: Direction) -> [[f64; DIR_KERNEL]; DIR_KERNEL] {
    let mut m = [[0.0; DIR_KERNEL]; DIR_KERNEL];
    for i in 0..DIR_KERNEL {
        match dir {
            Direction::Horizontal => m[DIR_KERNEL / 2][i] = 1.0,
            Direction::Vertical => m[i][DIR_KERNEL / 2] = 1.0,
            Direction::LeadingDiagonal => m[i][i] = 1.0,
            Direction::ReverseDiagonal => m[i][DIR_KERNEL - 1 - i] = 1.0,
        }
    }
    m
}

fn tiled_mask(dir: Direction, c_out: usize, c_in: usize) -> Vec<f64> {
    let m = direction_mask(dir);
    let mut mask = Vec::with_capacity(c_out * c_in * DIR_KERNEL * DIR_KERNEL);
    for _ in 0..c_out * c_in {
        for row in &m {
            mask.extend_from_slice(row);
        }
    }
    mask
}

/// Channel shuffle permutation with `groups` groups:
/// out[k * groups + d] = in[d * (c / groups) + k].
pub fn shuffle_permutation(channels: usize, groups: usize) -> Result<Vec<usize>> {
    if groups == 0 || channels % groups != 0 {
        return Err(Error::shape(
            "channel_shuffle",
            format!("channel count {channels} is not divisible by {groups} groups"),
        ));
    }
    let per = channels / groups;
    let mut perm = vec![0; channels];
    for d in 0..groups {
        for k in 0..per {
            perm[k * groups + d] = d * per + k;
        }
    }
    Ok(perm)
}

/// Four parallel line-masked convolutions. Structural zeros are kept exact by
/// the optimizer re-applying each kernel's mask after every step.
pub struct DirectionalConvUnit {
    kernels: Vec<Parameter>,
    biases: Vec<Parameter>,
}

impl DirectionalConvUnit {
    pub fn new(init: &mut Initializer, prefix: &str) -> Self {
        let mut kernels = Vec::with_capacity(4);
        let mut biases = Vec::with_capacity(4);
        for (dir, tag) in DIRECTIONS.iter().zip(["h", "v", "ld", "rd"]) {
            let w = init
                .conv_weight(
                    &format!("{prefix}/dir_{tag}/weight"),
                    DIR_OUT,
                    CHANNELS,
                    DIR_KERNEL,
                    DIR_KERNEL,
                    Some(DIR_KERNEL),
                )
                .with_mask(tiled_mask(*dir, DIR_OUT, CHANNELS));
            kernels.push(w);
            biases.push(init.conv_bias(&format!("{prefix}/dir_{tag}/bias"), DIR_OUT));
        }
        DirectionalConvUnit { kernels, biases }
    }

    /// Concatenation order is exactly [h x8, v x8, ld x8, rd x8]; padding 2
    /// preserves the spatial size.
    pub fn forward(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        if x.shape().c != CHANNELS {
            return Err(Error::shape(
                "directional_unit",
                format!("expected {CHANNELS} input channels, got {}", x.shape().c),
            ));
        }
        let mut branches = Vec::with_capacity(4);
        for (w, b) in self.kernels.iter().zip(&self.biases) {
            branches.push(tape.conv2d(x, &w.value, &b.value, 1, DIR_KERNEL / 2)?);
        }
        tape.concat_channels(&branches)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.kernels.iter_mut().chain(self.biases.iter_mut()).collect()
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.kernels.iter().chain(self.biases.iter()).collect()
    }
}

/// Traditional spatial attention: channel max and mean maps, a 7x7 conv
/// (2 -> 1 channels, padding 3), then sigmoid.
pub struct SpatialAttention {
    weight: Parameter,
    bias: Parameter,
}

impl SpatialAttention {
    pub fn new(init: &mut Initializer, prefix: &str) -> Self {
        SpatialAttention {
            weight: init.conv_weight(&format!("{prefix}/sa/weight"), 1, 2, 7, 7, None),
            bias: init.conv_bias(&format!("{prefix}/sa/bias"), 1),
        }
    }

    pub fn apply(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        let mx = tape.channel_max(x)?;
        let mn = tape.channel_mean(x)?;
        let stacked = tape.concat_channels(&[mx, mn])?;
        let conv = tape.conv2d(&stacked, &self.weight.value, &self.bias.value, 1, 3)?;
        tape.sigmoid(&conv)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Parameter> {
        vec![&self.weight, &self.bias]
    }
}

/// Learnable fusion of the four subset attention maps. The weights live on
/// the simplex by construction: w = softmax(theta), with theta starting
/// all-equal so every map begins at 0.25. The fused map passes a 3x3 conv
/// and a sigmoid.
pub struct AttentionFusion {
    theta: Option<Parameter>,
    conv_w: Parameter,
    conv_b: Parameter,
}

impl AttentionFusion {
    pub fn new(init: &mut Initializer, prefix: &str, learnable: bool) -> Self {
        AttentionFusion {
            theta: learnable
                .then(|| init.constant(&format!("{prefix}/fuse/theta"), Shape::new(1, GROUPS, 1, 1), 0.0)),
            conv_w: init.conv_weight(&format!("{prefix}/fuse/weight"), 1, 1, 3, 3, None),
            conv_b: init.conv_bias(&format!("{prefix}/fuse/bias"), 1),
        }
    }

    /// The four scalar fusion weights, each shaped (1,1,1,1).
    pub fn weights(&self, tape: &Tape) -> Result<Vec<Tensor>> {
        match &self.theta {
            Some(theta) => {
                let row = tape.reshape(&theta.value, Shape::new(1, 1, 1, GROUPS))?;
                let soft = tape.softmax_rows(&row)?;
                let back = tape.reshape(&soft, Shape::new(1, GROUPS, 1, 1))?;
                tape.split_channels(&back, &[1; GROUPS])
            }
            None => Ok(vec![Tensor::scalar(1.0 / GROUPS as f64); GROUPS]),
        }
    }

    /// Convex combination of the maps before the fusion convolution.
    pub fn weighted_sum(&self, tape: &Tape, maps: &[Tensor]) -> Result<Tensor> {
        if maps.len() != GROUPS {
            return Err(Error::shape(
                "weighted_fuse",
                format!("expected {GROUPS} maps, got {}", maps.len()),
            ));
        }
        let shape = maps[0].shape();
        for m in maps {
            if m.shape() != shape {
                return Err(Error::shape(
                    "weighted_fuse",
                    format!("map shapes differ: {} vs {}", m.shape(), shape),
                ));
            }
        }
        let weights = self.weights(tape)?;
        let mut acc = tape.mul(&weights[0], &maps[0])?;
        for (w, m) in weights.iter().zip(maps).skip(1) {
            let term = tape.mul(w, m)?;
            acc = tape.add(&acc, &term)?;
        }
        Ok(acc)
    }

    pub fn fuse(&self, tape: &Tape, maps: &[Tensor]) -> Result<Tensor> {
        let z = self.weighted_sum(tape, maps)?;
        let conv = tape.conv2d(&z, &self.conv_w.value, &self.conv_b.value, 1, 1)?;
        tape.sigmoid(&conv)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = self.theta.iter_mut().collect();
        out.push(&mut self.conv_w);
        out.push(&mut self.conv_b);
        out
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = self.theta.iter().collect();
        out.push(&self.conv_w);
        out.push(&self.conv_b);
        out
    }
}

/// Spatial group-wise enhancement, the grouped-attention alternative used by
/// the `Sge` ablation: each group is gated by the similarity between its
/// positions and its global-pooled semantic vector, normalized over space.
pub struct SgeAttention {
    gamma: Parameter,
    beta: Parameter,
}

const SGE_NORM_EPS: f64 = 1e-5;

impl SgeAttention {
    pub fn new(init: &mut Initializer, prefix: &str) -> Self {
        SgeAttention {
            gamma: init.constant(&format!("{prefix}/sge/gamma"), Shape::new(1, GROUPS, 1, 1), 1.0),
            beta: init.constant(&format!("{prefix}/sge/beta"), Shape::new(1, GROUPS, 1, 1), 0.0),
        }
    }

    pub fn apply(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        let c = x.shape().c;
        if c % GROUPS != 0 {
            return Err(Error::shape(
                "sge",
                format!("channel count {c} is not divisible by {GROUPS} groups"),
            ));
        }
        let per = c / GROUPS;
        let groups = tape.split_channels(x, &vec![per; GROUPS])?;
        let gammas = tape.split_channels(&self.gamma.value, &[1; GROUPS])?;
        let betas = tape.split_channels(&self.beta.value, &[1; GROUPS])?;
        let mut enhanced = Vec::with_capacity(GROUPS);
        for ((g, gamma), beta) in groups.iter().zip(&gammas).zip(&betas) {
            let semantic = tape.spatial_mean(g)?;
            let weighted = tape.mul(g, &semantic)?;
            // Per-position dot product with the semantic vector.
            let coeff = tape.affine(&tape.channel_mean(&weighted)?, per as f64, 0.0)?;
            let mu = tape.spatial_mean(&coeff)?;
            let centered = tape.sub(&coeff, &mu)?;
            let var = tape.spatial_mean(&tape.mul(&centered, &centered)?)?;
            let std = tape.sqrt(&tape.affine(&var, 1.0, SGE_NORM_EPS)?)?;
            let normed = tape.div(&centered, &std)?;
            let scaled = tape.add(&tape.mul(gamma, &normed)?, beta)?;
            let gate = tape.sigmoid(&scaled)?;
            enhanced.push(tape.mul(g, &gate)?);
        }
        tape.concat_channels(&enhanced)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> Vec<&Parameter> {
        vec![&self.gamma, &self.beta]
    }
}

/// Behavior switches matching the attention ablations: the full module,
/// shuffle removed, fusion weights frozen at 0.25, one traditional spatial
/// attention over all channels, or group-wise enhancement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionVariant {
    Full,
    NoShuffle,
    NoWeights,
    PlainSa,
    Sge,
}

impl AttentionVariant {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => AttentionVariant::Full,
            "no_shuffle" => AttentionVariant::NoShuffle,
            "no_weights" => AttentionVariant::NoWeights,
            "plain_sa" => AttentionVariant::PlainSa,
            "sge" => AttentionVariant::Sge,
            other => {
                return Err(Error::Config(format!(
                    "unknown attention variant '{other}' (expected full, no_shuffle, no_weights, plain_sa, sge)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttentionVariant::Full => "full",
            AttentionVariant::NoShuffle => "no_shuffle",
            AttentionVariant::NoWeights => "no_weights",
            AttentionVariant::PlainSa => "plain_sa",
            AttentionVariant::Sge => "sge",
        }
    }
}

/// The SWSAM pipeline over one 32-channel tensor, with the ablation variants.
/// Returns the enhanced features and, when one exists, the fused attention
/// map for debug export.
pub struct GroupAttention {
    variant: AttentionVariant,
    sa: Option<SpatialAttention>,
    fusion: Option<AttentionFusion>,
    sge: Option<SgeAttention>,
}

impl GroupAttention {
    pub fn new(init: &mut Initializer, prefix: &str, variant: AttentionVariant) -> Self {
        let (sa, fusion, sge) = match variant {
            AttentionVariant::Full | AttentionVariant::NoShuffle => (
                Some(SpatialAttention::new(init, prefix)),
                Some(AttentionFusion::new(init, prefix, true)),
                None,
            ),
            AttentionVariant::NoWeights => (
                Some(SpatialAttention::new(init, prefix)),
                Some(AttentionFusion::new(init, prefix, false)),
                None,
            ),
            AttentionVariant::PlainSa => (Some(SpatialAttention::new(init, prefix)), None, None),
            AttentionVariant::Sge => (None, None, Some(SgeAttention::new(init, prefix))),
        };
        GroupAttention {
            variant,
            sa,
            fusion,
            sge,
        }
    }

    pub fn enhance(&self, tape: &Tape, x: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        match self.variant {
            AttentionVariant::Full | AttentionVariant::NoShuffle | AttentionVariant::NoWeights => {
                let target = if self.variant == AttentionVariant::NoShuffle {
                    x.clone()
                } else {
                    let perm = shuffle_permutation(x.shape().c, GROUPS)?;
                    tape.permute_channels(x, &perm)?
                };
                let per = target.shape().c / GROUPS;
                let subsets = tape.split_channels(&target, &vec![per; GROUPS])?;
                let sa = self.sa.as_ref().expect("grouped variants carry SA");
                let mut maps = Vec::with_capacity(GROUPS);
                for sub in &subsets {
                    maps.push(sa.apply(tape, sub)?);
                }
                let fused = self
                    .fusion
                    .as_ref()
                    .expect("grouped variants carry fusion")
                    .fuse(tape, &maps)?;
                let out = apply_enhancement(tape, &fused, &target)?;
                Ok((out, Some(fused)))
            }
            AttentionVariant::PlainSa => {
                let sa = self.sa.as_ref().expect("plain_sa carries SA");
                let map = sa.apply(tape, x)?;
                let out = apply_enhancement(tape, &map, x)?;
                Ok((out, Some(map)))
            }
            AttentionVariant::Sge => {
                let out = self.sge.as_ref().expect("sge variant").apply(tape, x)?;
                Ok((out, None))
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        if let Some(sa) = &mut self.sa {
            out.append(&mut sa.params_mut());
        }
        if let Some(f) = &mut self.fusion {
            out.append(&mut f.params_mut());
        }
        if let Some(s) = &mut self.sge {
            out.append(&mut s.params_mut());
        }
        out
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        if let Some(sa) = &self.sa {
            out.append(&mut sa.params());
        }
        if let Some(f) = &self.fusion {
            out.append(&mut f.params());
        }
        if let Some(s) = &self.sge {
            out.append(&mut s.params());
        }
        out
    }
}

/// Detail enhancement: out = (a x f) + f, the attention map broadcasting
/// across channels.
pub fn apply_enhancement(tape: &Tape, attention: &Tensor, features: &Tensor) -> Result<Tensor> {
    let gated = tape.mul(attention, features)?;
    tape.add(&gated, features)
}

/// D-SWSAM: directional convolution unit followed by the SWSAM pipeline,
/// with the enhancement applied to the shuffled features.
pub struct DSwsam {
    pub unit: DirectionalConvUnit,
    pub attention: GroupAttention,
}

impl DSwsam {
    pub fn new(init: &mut Initializer, prefix: &str, variant: AttentionVariant) -> Self {
        DSwsam {
            unit: DirectionalConvUnit::new(init, prefix),
            attention: GroupAttention::new(init, prefix, variant),
        }
    }

    pub fn forward(&self, tape: &Tape, f1: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let oriented = self.unit.forward(tape, f1)?;
        self.attention.enhance(tape, &oriented)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.unit.params_mut();
        out.append(&mut self.attention.params_mut());
        out
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = self.unit.params();
        out.append(&mut self.attention.params());
        out
    }
}

/// SWSAM alone, for the highest-level features.
pub struct Swsam {
    pub attention: GroupAttention,
}

impl Swsam {
    pub fn new(init: &mut Initializer, prefix: &str, variant: AttentionVariant) -> Self {
        Swsam {
            attention: GroupAttention::new(init, prefix, variant),
        }
    }

    pub fn forward(&self, tape: &Tape, f4: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        self.attention.enhance(tape, f4)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.attention.params_mut()
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.attention.params()
    }
}
