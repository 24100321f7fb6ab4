pub mod autoencoder;
pub mod config;
pub mod cv;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod record;
pub mod report;
pub mod seed;
pub mod sequence;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
