//! Differentiable operations. Each op validates shapes, computes its forward
//! value, and registers a backward closure on the tape when the output lies
//! on the differentiable path.

mod conv;
mod elementwise;
mod linalg;
mod reduce;
mod shape_ops;
