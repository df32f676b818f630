//! Reverse-mode autodiff tape. Operations record themselves in execution
//! order (which is a topological order of the graph); `backward` replays the
//! recorded closures in reverse and accumulates gradients into every tensor
//! on the differentiable path.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Entry {
    output: Tensor,
    backward: Box<dyn FnOnce()>,
}

/// Recording context for one forward/backward pass. A tape is single-threaded;
/// independent model instances each own their own tape.
pub struct Tape {
    entries: RefCell<Vec<Entry>>,
    recording: bool,
}

impl Tape {
    /// A tape that records operations for a later `backward`.
    pub fn new() -> Tape {
        Tape {
            entries: RefCell::new(Vec::new()),
            recording: true,
        }
    }

    /// A pass-through tape for inference: nothing is recorded, `backward`
    /// is unavailable.
    pub fn inference() -> Tape {
        Tape {
            entries: RefCell::new(Vec::new()),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.entries.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.borrow().is_empty()
    }

    /// Register a backward rule for `output`. Called by every op whose output
    /// lies on the differentiable path.
    pub(crate) fn record(&self, output: &Tensor, backward: impl FnOnce() + 'static) {
        if self.recording {
            self.entries.borrow_mut().push(Entry {
                output: output.clone(),
                backward: Box::new(backward),
            });
        }
    }

    /// Reverse sweep: seeds d(loss)/d(loss) = 1 and replays recorded rules in
    /// reverse order. Consumes the tape; a second call without a fresh forward
    /// pass is an error.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if !self.recording {
            return Err(Error::Autodiff(
                "backward called on an inference tape".into(),
            ));
        }
        if !loss.shape().is_scalar() {
            return Err(Error::Autodiff(format!(
                "backward requires a scalar loss, got shape {}",
                loss.shape()
            )));
        }
        let entries = std::mem::take(&mut *self.entries.borrow_mut());
        if entries.is_empty() {
            return Err(Error::Autodiff(
                "tape is empty: backward was already called or no differentiable ops ran".into(),
            ));
        }
        if !entries.iter().any(|e| e.output.same_storage(loss)) {
            return Err(Error::Autodiff(
                "loss was not produced by operations recorded on this tape".into(),
            ));
        }
        let loss_val = loss.item();
        if !loss_val.is_finite() {
            return Err(Error::Numerical(format!("loss is not finite: {loss_val}")));
        }
        loss.seed_grad(1.0);
        for entry in entries.into_iter().rev() {
            // Entries whose output never received a gradient do not feed the loss.
            if entry.output.has_grad() {
                (entry.backward)();
            }
        }
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn sum_backward_is_all_ones() {
        let tape = Tape::new();
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0.3, -1.0, 2.0, 5.5])
            .unwrap()
            .requires_grad(true);
        let loss = tape.sum_all(&x).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn half_square_sum_backward_is_identity() {
        let tape = Tape::new();
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![0.5, -2.0, 3.0])
            .unwrap()
            .requires_grad(true);
        let sq = tape.mul(&x, &x).unwrap();
        let half = tape.affine(&sq, 0.5, 0.0).unwrap();
        let loss = tape.sum_all(&half).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![0.5, -2.0, 3.0]);
    }

    #[test]
    fn backward_twice_without_forward_errors() {
        let tape = Tape::new();
        let x = Tensor::scalar(2.0).requires_grad(true);
        let loss = tape.mul(&x, &x).unwrap();
        tape.backward(&loss).unwrap();
        let again = tape.backward(&loss);
        assert!(again.is_err());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let x = Tensor::zeros(Shape::new(1, 1, 2, 2)).requires_grad(true);
        let y = tape.relu(&x).unwrap();
        assert!(tape.backward(&y).is_err());
    }

    #[test]
    fn backward_rejects_foreign_loss() {
        let tape = Tape::new();
        let x = Tensor::scalar(1.0).requires_grad(true);
        let _y = tape.relu(&x).unwrap();
        let foreign = Tensor::scalar(0.0);
        assert!(tape.backward(&foreign).is_err());
    }

    #[test]
    fn inference_tape_records_nothing() {
        let tape = Tape::inference();
        let x = Tensor::scalar(1.0).requires_grad(true);
        let y = tape.sigmoid(&x).unwrap();
        assert!((y.item() - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!(tape.is_empty());
    }
}
