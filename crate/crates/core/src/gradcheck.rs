//! Central finite-difference gradient checking.
//!
//! The checker runs one recorded forward/backward pass to collect analytic
//! gradients, then re-evaluates the forward closure on an inference tape with
//! single coordinates nudged by +/- h. A coordinate passes when the absolute
//! difference is below 1e-8 (finite-difference noise floor for near-zero
//! gradients) or the relative error |a - fd| / max(|a|, |fd|) is below the
//! tolerance.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub h: f64,
    pub tolerance: f64,
    pub samples_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            tolerance: 1e-3,
            samples_per_tensor: 20,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckOutcome {
    pub name: String,
    pub max_rel_err: f64,
    pub coords_checked: usize,
    pub passed: bool,
    pub worst_tensor: String,
}

impl GradCheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "{}: {} (max rel err {:.3e} over {} coords{})",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.max_rel_err,
            self.coords_checked,
            if self.passed {
                String::new()
            } else {
                format!(", worst at {}", self.worst_tensor)
            }
        )
    }
}

const ABS_FLOOR: f64 = 1e-8;

fn rel_err(a: f64, fd: f64) -> f64 {
    let diff = (a - fd).abs();
    if diff <= ABS_FLOOR {
        0.0
    } else {
        diff / a.abs().max(fd.abs())
    }
}

/// Check d(loss)/d(tensor) for each named tensor against central differences.
///
/// `forward` must rebuild the loss from the same tensor handles each call.
/// `corrupt` is a test hook: (tensor index, delta) added to one analytic
/// gradient before comparison, to prove the checker reports bad rules.
pub fn check_gradients<F>(
    name: &str,
    tensors: &[(&str, &Tensor)],
    forward: F,
    cfg: &GradCheckConfig,
    corrupt: Option<(usize, f64)>,
) -> Result<GradCheckOutcome>
where
    F: Fn(&Tape) -> Result<Tensor>,
{
    for (tname, t) in tensors {
        if !t.needs_grad() {
            return Err(Error::Autodiff(format!(
                "gradcheck tensor '{tname}' does not require grad"
            )));
        }
        t.zero_grad();
    }
    let tape = Tape::new();
    let loss = forward(&tape)?;
    if !loss.shape().is_scalar() {
        return Err(Error::Autodiff("gradcheck loss must be scalar".into()));
    }
    tape.backward(&loss)?;

    let mut analytic: Vec<Vec<f64>> = Vec::with_capacity(tensors.len());
    for (tname, t) in tensors {
        let g = t.grad_vec().ok_or_else(|| {
            Error::Autodiff(format!("no gradient reached tensor '{tname}'"))
        })?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient in tensor '{tname}'"
            )));
        }
        analytic.push(g);
    }
    if let Some((idx, delta)) = corrupt {
        analytic[idx][0] += delta;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut max_rel = 0.0f64;
    let mut worst = String::new();
    let mut checked = 0;
    for (ti, (tname, t)) in tensors.iter().enumerate() {
        let numel = t.numel();
        let samples = cfg.samples_per_tensor.min(numel);
        let coords: Vec<usize> = if samples == numel {
            (0..numel).collect()
        } else {
            (0..samples).map(|_| rng.gen_range(0..numel)).collect()
        };
        for coord in coords {
            let original = t.data()[coord];
            t.data_mut()[coord] = original + cfg.h;
            let plus = forward(&Tape::inference())?.item();
            t.data_mut()[coord] = original - cfg.h;
            let minus = forward(&Tape::inference())?.item();
            t.data_mut()[coord] = original;
            let fd = (plus - minus) / (2.0 * cfg.h);
            let e = rel_err(analytic[ti][coord], fd);
            checked += 1;
            if e > max_rel {
                max_rel = e;
                worst = format!("{tname}[{coord}]");
            }
        }
    }
    for (_, t) in tensors {
        t.zero_grad();
    }
    Ok(GradCheckOutcome {
        name: name.to_string(),
        max_rel_err: max_rel,
        coords_checked: checked,
        passed: max_rel < cfg.tolerance,
        worst_tensor: worst,
    })
}

/// Scalar loss from a fixed random projection of an output tensor, so every
/// entry receives a distinct weight.
fn project(tape: &Tape, out: &Tensor, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = Tensor::from_fn(out.shape(), |_| rng.gen_range(-1.0..1.0));
    let weighted = tape.mul(out, &weights)?;
    tape.sum_all(&weighted)
}

/// Finite-difference checks for every network module on small shapes:
/// the backbone stub (on its smallest legal input, 32x32), D-SWSAM, SWSAM,
/// KTM in full mode, the predictor, and the hybrid loss. Returns one outcome
/// per module.
pub fn module_suite(cfg: &GradCheckConfig) -> Result<Vec<GradCheckOutcome>> {
    use crate::backbone::{FeatureExtractor, PyramidNormalizer, StubBackbone, DESK_STAGE_CHANNELS};
    use crate::dswsam::{AttentionVariant, DSwsam, Swsam};
    use crate::init::Initializer;
    use crate::ktm::{Ktm, KtmMode};
    use crate::predictor::{hybrid_loss, SaliencyPredictor};
    use crate::tensor::Shape;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(9000));
    let mut leaf = |shape: Shape, lo: f64, hi: f64| -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen_range(lo..hi)).requires_grad(true)
    };
    let mut outcomes = Vec::new();

    {
        let mut init = Initializer::new(cfg.seed.wrapping_add(1));
        let stub = StubBackbone::new(&mut init, DESK_STAGE_CHANNELS);
        let norm = PyramidNormalizer::new(&mut init, DESK_STAGE_CHANNELS);
        let image = leaf(Shape::new(2, 3, 32, 32), 0.0, 1.0);
        let named: Vec<(String, Tensor)> = stub
            .params()
            .into_iter()
            .chain(norm.params())
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        let mut tensors: Vec<(&str, &Tensor)> = vec![("image", &image)];
        tensors.extend(named.iter().map(|(n, t)| (n.as_str(), t)));
        outcomes.push(check_gradients(
            "backbone",
            &tensors,
            |t| {
                let pyr = norm.forward(t, &stub.extract(t, &image)?)?;
                let a = project(t, &pyr.f1, 1)?;
                let b = project(t, &pyr.f2, 2)?;
                let c = project(t, &pyr.f3, 3)?;
                let d = project(t, &pyr.f4, 4)?;
                t.add(&t.add(&a, &b)?, &t.add(&c, &d)?)
            },
            cfg,
            None,
        )?);
    }

    {
        let mut init = Initializer::new(cfg.seed.wrapping_add(2));
        let module = DSwsam::new(&mut init, "dswsam", AttentionVariant::Full);
        let input = leaf(Shape::new(2, 32, 8, 8), -1.0, 1.0);
        let named: Vec<(String, Tensor)> = module
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        let mut tensors: Vec<(&str, &Tensor)> = vec![("input", &input)];
        tensors.extend(named.iter().map(|(n, t)| (n.as_str(), t)));
        outcomes.push(check_gradients(
            "dswsam",
            &tensors,
            |t| {
                let (out, _) = module.forward(t, &input)?;
                project(t, &out, 5)
            },
            cfg,
            None,
        )?);
    }

    {
        let mut init = Initializer::new(cfg.seed.wrapping_add(3));
        let module = Swsam::new(&mut init, "swsam", AttentionVariant::Full);
        let input = leaf(Shape::new(2, 32, 4, 4), -1.0, 1.0);
        let named: Vec<(String, Tensor)> = module
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        let mut tensors: Vec<(&str, &Tensor)> = vec![("input", &input)];
        tensors.extend(named.iter().map(|(n, t)| (n.as_str(), t)));
        outcomes.push(check_gradients(
            "swsam",
            &tensors,
            |t| {
                let (out, _) = module.forward(t, &input)?;
                project(t, &out, 6)
            },
            cfg,
            None,
        )?);
    }

    {
        let mut init = Initializer::new(cfg.seed.wrapping_add(4));
        let mut ktm = Ktm::new(&mut init, "ktm", 32, KtmMode::Full);
        for p in ktm.params_mut() {
            if p.name.contains("gamma") {
                p.value.set_data(vec![0.4])?;
            }
        }
        let f2 = leaf(Shape::new(2, 32, 4, 4), -1.0, 1.0);
        let f3 = leaf(Shape::new(2, 32, 4, 4), -1.0, 1.0);
        let named: Vec<(String, Tensor)> = ktm
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        let mut tensors: Vec<(&str, &Tensor)> = vec![("f2", &f2), ("f3", &f3)];
        tensors.extend(named.iter().map(|(n, t)| (n.as_str(), t)));
        outcomes.push(check_gradients(
            "ktm",
            &tensors,
            |t| {
                let out = ktm.forward(t, &f2, &f3)?;
                project(t, &out.features, 7)
            },
            cfg,
            None,
        )?);
    }

    {
        let mut init = Initializer::new(cfg.seed.wrapping_add(5));
        let pred = SaliencyPredictor::new(&mut init, "predictor", 32);
        let low = leaf(Shape::new(2, 32, 16, 16), -1.0, 1.0);
        let mid = leaf(Shape::new(2, 32, 4, 4), -1.0, 1.0);
        let high = leaf(Shape::new(2, 32, 2, 2), -1.0, 1.0);
        let named: Vec<(String, Tensor)> = pred
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        let mut tensors: Vec<(&str, &Tensor)> =
            vec![("low", &low), ("mid", &mid), ("high", &high)];
        tensors.extend(named.iter().map(|(n, t)| (n.as_str(), t)));
        outcomes.push(check_gradients(
            "predictor",
            &tensors,
            |t| {
                let s = pred.decode(t, &low, &mid, &high)?;
                project(t, &s, 8)
            },
            cfg,
            None,
        )?);
    }

    {
        let pred = leaf(Shape::new(2, 1, 8, 8), 0.05, 0.95);
        let mask = Tensor::from_fn(Shape::new(2, 1, 8, 8), |i| ((i * 7) % 5 < 2) as u8 as f64);
        outcomes.push(check_gradients(
            "hybrid_loss",
            &[("prediction", &pred)],
            |t| hybrid_loss(t, &pred, &mask),
            cfg,
            None,
        )?);
    }

    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn quadratic_gradient_checks_out() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![0.4, -0.7, 1.3])
            .unwrap()
            .requires_grad(true);
        let out = check_gradients(
            "quadratic",
            &[("x", &x)],
            |tape| {
                let sq = tape.mul(&x, &x)?;
                tape.sum_all(&sq)
            },
            &GradCheckConfig::default(),
            None,
        )
        .unwrap();
        assert!(out.passed, "{}", out.line());
    }

    #[test]
    fn corrupted_gradient_is_reported() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![0.3, 0.9])
            .unwrap()
            .requires_grad(true);
        let out = check_gradients(
            "corrupted",
            &[("x", &x)],
            |tape| {
                let sq = tape.mul(&x, &x)?;
                tape.sum_all(&sq)
            },
            &GradCheckConfig::default(),
            Some((0, 0.37)),
        )
        .unwrap();
        assert!(!out.passed);
    }
}
