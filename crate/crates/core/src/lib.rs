pub mod cli;
pub mod config;
pub mod ct;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod mfe;
pub mod net;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod windowing;

pub use error::{Error, Result};
pub use tensor::Tensor;
