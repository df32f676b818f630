//! Knowledge transfer between the two middle pyramid levels.
//!
//! The element-wise product of the two levels highlights what they agree on;
//! the sum keeps everything either contains. A self-attention style
//! correlation is modeled between the two combinations: the query projection
//! (1x1 conv, c -> c/2) reads the sum, the key projection reads the product,
//! and C = row-softmax(Q K). The correlation is then transferred onto value
//! projections (1x1 conv, c -> c) of the raw levels, blended back through
//! zero-initialized residual scalars, and integrated by a 3x3 convolution.
//! At initialization the residual scalars are zero, so the module reduces
//! exactly to conv(f2 + f3) and learns the attention path from there.

use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::optim::Parameter;
use crate::tape::Tape;
use crate::tensor::{Shape, Tensor};

/// Which combination feeds the correlation: both (product keys, sum queries),
/// sum only, or product only. The transfer path is unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KtmMode {
    Full,
    SumOnly,
    ProductOnly,
}

impl KtmMode {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => KtmMode::Full,
            "sum_only" => KtmMode::SumOnly,
            "product_only" => KtmMode::ProductOnly,
            other => {
                return Err(Error::Config(format!(
                    "unknown ktm mode '{other}' (expected full, sum_only, product_only)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            KtmMode::Full => "full",
            KtmMode::SumOnly => "sum_only",
            KtmMode::ProductOnly => "product_only",
        }
    }
}

pub struct Ktm {
    mode: KtmMode,
    query_w: Parameter,
    query_b: Parameter,
    key_w: Parameter,
    key_b: Parameter,
    value1_w: Parameter,
    value1_b: Parameter,
    value2_w: Parameter,
    value2_b: Parameter,
    gamma1: Parameter,
    gamma2: Parameter,
    integrate_w: Parameter,
    integrate_b: Parameter,
    channels: usize,
}

pub struct KtmOutput {
    pub features: Tensor,
    /// The (hw)x(hw) correlation, one matrix per batch item.
    pub correlation: Tensor,
}

impl Ktm {
    pub fn new(init: &mut Initializer, prefix: &str, channels: usize, mode: KtmMode) -> Self {
        assert!(channels % 2 == 0, "KTM channel count must be even");
        let half = channels / 2;
        Ktm {
            mode,
            query_w: init.conv_weight(&format!("{prefix}/query/weight"), half, channels, 1, 1, None),
            query_b: init.conv_bias(&format!("{prefix}/query/bias"), half),
            key_w: init.conv_weight(&format!("{prefix}/key/weight"), half, channels, 1, 1, None),
            key_b: init.conv_bias(&format!("{prefix}/key/bias"), half),
            value1_w: init.conv_weight(&format!("{prefix}/value1/weight"), channels, channels, 1, 1, None),
            value1_b: init.conv_bias(&format!("{prefix}/value1/bias"), channels),
            value2_w: init.conv_weight(&format!("{prefix}/value2/weight"), channels, channels, 1, 1, None),
            value2_b: init.conv_bias(&format!("{prefix}/value2/bias"), channels),
            gamma1: init.constant(&format!("{prefix}/gamma1"), Shape::new(1, 1, 1, 1), 0.0),
            gamma2: init.constant(&format!("{prefix}/gamma2"), Shape::new(1, 1, 1, 1), 0.0),
            integrate_w: init.conv_weight(&format!("{prefix}/integrate/weight"), channels, channels, 3, 3, None),
            integrate_b: init.conv_bias(&format!("{prefix}/integrate/bias"), channels),
            channels,
        }
    }

    pub fn mode(&self) -> KtmMode {
        self.mode
    }

    /// Element-wise product and sum of the two mid-level features.
    pub fn combine(tape: &Tape, f2: &Tensor, f3: &Tensor) -> Result<(Tensor, Tensor)> {
        if f2.shape() != f3.shape() {
            return Err(Error::shape(
                "ktm_combine",
                format!("levels differ: {} vs {}", f2.shape(), f3.shape()),
            ));
        }
        Ok((tape.mul(f2, f3)?, tape.add(f2, f3)?))
    }

    /// Row-stochastic correlation between the chosen combinations.
    pub fn model_knowledge(&self, tape: &Tape, f_pro: &Tensor, f_sum: &Tensor) -> Result<Tensor> {
        let (q_src, k_src) = match self.mode {
            KtmMode::Full => (f_sum, f_pro),
            KtmMode::SumOnly => (f_sum, f_sum),
            KtmMode::ProductOnly => (f_pro, f_pro),
        };
        let s = q_src.shape();
        let half = self.channels / 2;
        let hw = s.hw();
        let q = tape.conv2d(q_src, &self.query_w.value, &self.query_b.value, 1, 0)?;
        let k = tape.conv2d(k_src, &self.key_w.value, &self.key_b.value, 1, 0)?;
        let q_flat = tape.reshape(&q, Shape::new(s.n, 1, half, hw))?;
        let q_mat = tape.transpose2d(&q_flat)?;
        let k_mat = tape.reshape(&k, Shape::new(s.n, 1, half, hw))?;
        let scores = tape.matmul(&q_mat, &k_mat)?;
        tape.softmax_rows(&scores)
    }

    /// Transfer the correlation onto the raw features and integrate.
    pub fn transfer(
        &self,
        tape: &Tape,
        f2: &Tensor,
        f3: &Tensor,
        correlation: &Tensor,
    ) -> Result<Tensor> {
        let s = f2.shape();
        let hw = s.hw();
        let c = self.channels;
        let corr_t = tape.transpose2d(correlation)?;

        let v1 = tape.conv2d(f2, &self.value1_w.value, &self.value1_b.value, 1, 0)?;
        let v1_mat = tape.reshape(&v1, Shape::new(s.n, 1, c, hw))?;
        let t1 = tape.reshape(&tape.matmul(&v1_mat, &corr_t)?, s)?;
        let v2 = tape.conv2d(f3, &self.value2_w.value, &self.value2_b.value, 1, 0)?;
        let v2_mat = tape.reshape(&v2, Shape::new(s.n, 1, c, hw))?;
        let t2 = tape.reshape(&tape.matmul(&v2_mat, &corr_t)?, s)?;

        let r1 = tape.add(&tape.mul(&self.gamma1.value, &t1)?, f2)?;
        let r2 = tape.add(&tape.mul(&self.gamma2.value, &t2)?, f3)?;
        let merged = tape.add(&r1, &r2)?;
        tape.conv2d(&merged, &self.integrate_w.value, &self.integrate_b.value, 1, 1)
    }

    pub fn forward(&self, tape: &Tape, f2: &Tensor, f3: &Tensor) -> Result<KtmOutput> {
        let (f_pro, f_sum) = Ktm::combine(tape, f2, f3)?;
        let correlation = self.model_knowledge(tape, &f_pro, &f_sum)?;
        let features = self.transfer(tape, f2, f3, &correlation)?;
        Ok(KtmOutput {
            features,
            correlation,
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![
            &mut self.query_w,
            &mut self.query_b,
            &mut self.key_w,
            &mut self.key_b,
            &mut self.value1_w,
            &mut self.value1_b,
            &mut self.value2_w,
            &mut self.value2_b,
            &mut self.gamma1,
            &mut self.gamma2,
            &mut self.integrate_w,
            &mut self.integrate_b,
        ]
    }

    pub fn params(&self) -> Vec<&Parameter> {
        vec![
            &self.query_w,
            &self.query_b,
            &self.key_w,
            &self.key_b,
            &self.value1_w,
            &self.value1_b,
            &self.value2_w,
            &self.value2_b,
            &self.gamma1,
            &self.gamma2,
            &self.integrate_w,
            &self.integrate_b,
        ]
    }

    /// Integration conv applied to f2 + f3, the exact output at gamma = 0.
    pub fn plain_fusion(&self, tape: &Tape, f2: &Tensor, f3: &Tensor) -> Result<Tensor> {
        let merged = tape.add(f2, f3)?;
        tape.conv2d(&merged, &self.integrate_w.value, &self.integrate_b.value, 1, 1)
    }
}
