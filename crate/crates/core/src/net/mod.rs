//! Encoder-decoder segmentation network built from visual state-space blocks.

pub mod config;
pub mod layers;
pub mod model;
pub mod ssm;

pub use config::ModelConfig;
pub use layers::{patch_embed, patch_expand, patch_merge, vss_block, VssDims};
pub use model::{count_params, estimate_flops, ForwardTrace, Wemf};
pub use ssm::{scan_core, selective_scan, ss2d, ss2d_directions, SsmDims};
