//! Neural image-space tessellation on a desk-scale CPU stack.
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod image;
pub mod mesh;
pub mod network;
pub mod raster;
pub mod selftest;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
