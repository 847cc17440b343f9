//! Minimal CPU neural-network engine: dense tensors, strided (transposed)
//! convolutions, linear layers, batch normalization and Adam, all with
//! hand-written backward passes.

mod adam;
mod layers;
mod param;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use layers::{
    col2im, im2col, Activation, BatchNorm, BatchNormCache, Conv2d, ConvCache, ConvGeom,
    ConvTranspose2d, Linear,
};
pub use param::{Param, Parameterized};
pub use tensor::Tensor;
