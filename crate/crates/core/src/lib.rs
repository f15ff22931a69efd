//! Stress detection from biometric signals and facial landmarks with
//! manifold-learning dimensionality reduction and CNN fusion networks.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod manifold;
pub mod neuralnet;
pub mod numerics;
pub mod pipeline;
pub mod synthdata;

pub use error::{Error, Result};
