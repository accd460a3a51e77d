//! EDSR-style super-resolution inference.
//!
//! The network is convolution and ReLU only: a head conv, a stack of
//! residual blocks with residual scaling, a body-end conv with a global
//! skip connection, a pixel-shuffle upsampler and a final conv. Weights
//! come from `SRW1` files (see [`weights`]).

mod model;
mod ops;
mod tensor;
pub mod weights;

pub use model::{forward, SrModel};
pub use ops::{conv2d, pixel_shuffle, pixel_unshuffle, relu, residual_block, ConvLayer};
pub use tensor::Tensor3;
pub use weights::{encode_weights, load_weights, read_weights, write_weights, MAGIC, VERSION};
