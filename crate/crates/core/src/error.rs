//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any pipeline stage.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A file did not match the expected on-disk format.
    #[error("format error: {0}")]
    Format(String),
    /// A manifest or record failed validation.
    #[error("validation error: {0}")]
    Validation(String),
    /// Tensor or raster dimensions are inconsistent.
    #[error("shape error: {0}")]
    Shape(String),
    /// A configuration value is out of its legal range.
    #[error("configuration error: {0}")]
    Config(String),
    /// A value left the representable range of an encoding.
    #[error("range error: {0}")]
    Range(String),
    /// A computation produced non-finite values or had an empty reduction set.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A depth map with no valid measurement cannot be densified.
    #[error("unfillable input: {0}")]
    Unfillable(String),
    /// A checkpoint does not match the model it is being loaded into.
    #[error("checkpoint incompatible: {0}")]
    Incompatible(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
