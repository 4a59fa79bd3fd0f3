//! The hierarchical encoder-decoder: encoder blocks with recorded pooling,
//! a mirrored decoder with index unpooling, the feature-preserving branch,
//! five side heads and a fusion head.

mod checkpoint;
mod config;
mod network;

pub use checkpoint::{load_checkpoint, load_into, save_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{parse_channel_scale, ChannelScale, NetworkConfig};
pub use network::{
    predict, ActivationCache, BinaryMask, Gradients, LayerKind, Network, NetworkGrad, ParamRef, SideOutputs, Topology,
};
