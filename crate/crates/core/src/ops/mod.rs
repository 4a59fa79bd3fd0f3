//! Layer vocabulary of the network, each with a forward and a reverse-mode
//! backward pass.
//!
//! Every function is pure. Output planes are computed independently so the
//! heavier kernels fan out over rayon without changing summation order.

mod activation;
mod concat;
mod conv;
mod deconv;
mod init;
mod pool;
mod receptive;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_map};
pub use concat::{concat_channels, split_channels};
pub use conv::{conv2d, conv2d_backward, same_padding, ConvParams};
pub use deconv::{deconv, deconv_backward, deconv_padding, SUPPORTED_FACTORS};
pub use init::{bilinear_kernel, bilinear_profile, he_normal_init};
pub use pool::{max_unpool2x2, max_unpool2x2_backward, maxpool2x2, maxpool2x2_backward, PoolIndices};
pub use receptive::{receptive_field, LayerGeometry};
