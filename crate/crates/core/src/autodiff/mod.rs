//! Minimal reverse-mode automatic differentiation over dense NCHW tensors.
//!
//! Tensors are reference-counted tape nodes; every operator records the
//! closure that routes its output gradient back to its inputs. The element
//! type is generic so the training path runs in `f32` while gradient checks
//! run the identical code in `f64`.

mod conv;
mod norm;
mod pool;
mod tensor;

pub mod gradcheck;

pub use conv::{conv2d, conv_transpose2d};
pub use norm::batch_norm;
pub use pool::{pool, upsample_bilinear, PoolKind};
pub use tensor::{concat_channels, Scalar, Shape, Tensor};
