//! Spectral super-resolution: predict a hyperspectral cube from a broad-band
//! image with a dense multiscale convolutional network, plus the evaluation
//! and linear-unmixing tools used to judge the result.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod metrics;
pub mod network;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod unmixing;
pub mod verify;

pub use error::{Error, Result};
