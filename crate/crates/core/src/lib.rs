//! Crack segmentation with a hierarchical encoder-decoder network.
//!
//! The crate is generic over the element type through [`Scalar`]; the
//! aliases below fix it to `f32` (training, inference, checkpoints) or
//! `f64` (gradient verification).

pub mod bayes;
pub mod data;
pub mod error;
pub mod metrics;
pub mod net;
pub mod ops;
pub mod scalar;
pub mod tensor;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{CheckpointError, Error, Result};
pub use scalar::Scalar;
pub use tensor::{Shape4, Tensor4};

pub type Tensor4f = Tensor4<f32>;
pub type Tensor4d = Tensor4<f64>;
pub type ConvParamsf = ops::ConvParams<f32>;
pub type ConvParamsd = ops::ConvParams<f64>;
pub type Networkf = net::Network<f32>;
pub type Networkd = net::Network<f64>;
pub type SideOutputsf = net::SideOutputs<f32>;
pub type SideOutputsd = net::SideOutputs<f64>;
pub type GaussianCrackModeld = bayes::GaussianCrackModel<f64>;
