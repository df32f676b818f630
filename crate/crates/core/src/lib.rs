//! GeleNet salient object detection on a self-contained f64 tensor core:
//! tape-based reverse-mode autodiff, directional shuffle-weighted spatial
//! attention, a knowledge transfer module, a partial-decoder saliency
//! predictor, the full saliency metric suite, and a synthetic ORSI-style
//! data pipeline.

pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod dswsam;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod ktm;
pub mod metrics;
pub mod model;
mod ops;
pub mod optim;
pub mod predictor;
pub mod tape;
pub mod tensor;
pub mod train;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use model::GeleNet;
pub use optim::{Adam, Parameter};
pub use tape::Tape;
pub use tensor::{Shape, Tensor};
