//! Dense rank-4 tensors in row-major (n, c, h, w) order with an optional
//! gradient buffer. All arithmetic is f64.

use std::cell::{Ref, RefCell, RefMut};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};

/// Logical dimensions of a rank-4 tensor: batch, channels, height, width.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    /// Flat row-major offset of element (n, c, h, w).
    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

pub(crate) struct TensorData {
    pub shape: Shape,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
}

/// Shared handle to a tensor. Cloning is cheap and aliases the same storage,
/// which is what lets a tape entry refer to the tensors it must update.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<TensorData>>,
}

impl Tensor {
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Tensor> {
        if data.len() != shape.numel() {
            return Err(Error::shape(
                "from_vec",
                format!("shape {} needs {} values, got {}", shape, shape.numel(), data.len()),
            ));
        }
        Ok(Tensor {
            inner: Rc::new(RefCell::new(TensorData {
                shape,
                data,
                grad: None,
                requires_grad: false,
            })),
        })
    }

    pub fn zeros(shape: Shape) -> Tensor {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f64) -> Tensor {
        Tensor::from_vec(shape, vec![value; shape.numel()]).expect("consistent by construction")
    }

    /// Scalar tensor of shape 1x1x1x1.
    pub fn scalar(value: f64) -> Tensor {
        Tensor::full(Shape::new(1, 1, 1, 1), value)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> f64) -> Tensor {
        let data = (0..shape.numel()).map(|i| f(i)).collect();
        Tensor::from_vec(shape, data).expect("consistent by construction")
    }

    /// Builder-style requires_grad toggle for leaf tensors.
    pub fn requires_grad(self, flag: bool) -> Tensor {
        self.inner.borrow_mut().requires_grad = flag;
        self
    }

    pub fn set_requires_grad(&self, flag: bool) {
        self.inner.borrow_mut().requires_grad = flag;
    }

    pub fn needs_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn shape(&self) -> Shape {
        self.inner.borrow().shape
    }

    pub fn numel(&self) -> usize {
        self.shape().numel()
    }

    pub fn data(&self) -> Ref<'_, [f64]> {
        Ref::map(self.inner.borrow(), |d| d.data.as_slice())
    }

    pub fn data_mut(&self) -> RefMut<'_, [f64]> {
        RefMut::map(self.inner.borrow_mut(), |d| d.data.as_mut_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    pub fn set_data(&self, data: Vec<f64>) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if data.len() != inner.shape.numel() {
            return Err(Error::shape(
                "set_data",
                format!("expected {} values, got {}", inner.shape.numel(), data.len()),
            ));
        }
        inner.data = data;
        Ok(())
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        let inner = self.inner.borrow();
        assert!(inner.shape.is_scalar(), "item() on non-scalar tensor {}", inner.shape);
        inner.data[0]
    }

    pub fn grad(&self) -> Option<Ref<'_, [f64]>> {
        let inner = self.inner.borrow();
        if inner.grad.is_some() {
            Some(Ref::map(inner, |d| d.grad.as_deref().expect("checked above")))
        } else {
            None
        }
    }

    pub fn grad_vec(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn has_grad(&self) -> bool {
        self.inner.borrow().grad.is_some()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Add a contribution into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&self, contribution: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        debug_assert_eq!(contribution.len(), inner.shape.numel());
        match inner.grad.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contribution) {
                    *gi += ci;
                }
            }
            None => inner.grad = Some(contribution.to_vec()),
        }
    }

    /// Seed the gradient buffer (used for the scalar loss at backward start).
    pub(crate) fn seed_grad(&self, value: f64) {
        let mut inner = self.inner.borrow_mut();
        let len = inner.shape.numel();
        inner.grad = Some(vec![value; len]);
    }

    /// Deep copy of the values without gradient state.
    pub fn detach_clone(&self) -> Tensor {
        let inner = self.inner.borrow();
        Tensor::from_vec(inner.shape, inner.data.clone()).expect("same shape")
    }

    /// True when both handles point at the same storage.
    pub fn same_storage(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub fn iter_finite(&self) -> bool {
        self.inner.borrow().data.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        write!(
            f,
            "Tensor({}, requires_grad={}, grad={})",
            inner.shape,
            inner.requires_grad,
            if inner.grad.is_some() { "yes" } else { "no" }
        )
    }
}
