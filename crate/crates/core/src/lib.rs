//! Guided depth completion toolkit: upsamples sparse range measurements to
//! dense depth maps steered by a registered color image.
//!
//! The crate provides the full pipeline: raster and camera primitives,
//! bit-exact dataset I/O, morphological pre-densification, a semi-global
//! matching stereo engine for auxiliary supervision, a reverse-mode autodiff
//! core, the dual-branch fusion network, training, and the standard depth
//! metric suite.

pub mod autodiff;
pub mod camera;
pub mod error;
pub mod eval;
pub mod fill;
pub mod imageio;
pub mod loss;
pub mod network;
pub mod raster;
pub mod sample;
pub mod stereo;
pub mod train;

pub use error::{Error, Result};
pub use raster::{DepthMap, Grid, IntensityImage, ValidMask, MISSING_DEPTH};
