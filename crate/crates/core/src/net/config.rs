use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    pub img_size: usize,
    pub patch_size: usize,
    pub depths: Vec<usize>,
    pub dims: Vec<usize>,
    pub d_state: usize,
    /// `d_inner = ssm_expand * dim` inside each VSS block.
    pub ssm_expand: usize,
    pub mfe_enabled: bool,
    pub mfe_ffn_ratio: usize,
    /// Std of the noise on the identity depthwise kernel inside MFE.
    pub mfe_dw_noise: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

impl ModelConfig {
    /// Small enough to train on a CPU in minutes.
    pub fn desk() -> Self {
        ModelConfig {
            in_channels: 3,
            num_classes: 3,
            img_size: 64,
            patch_size: 4,
            depths: vec![2, 2, 2],
            dims: vec![32, 64, 128],
            d_state: 8,
            ssm_expand: 2,
            mfe_enabled: true,
            mfe_ffn_ratio: 4,
            mfe_dw_noise: 1e-3,
        }
    }

    /// A VM-UNet-sized configuration at 256x256 input, used for size reports.
    pub fn reference_scale() -> Self {
        ModelConfig {
            img_size: 256,
            depths: vec![2, 2, 9, 2],
            dims: vec![96, 192, 384, 768],
            d_state: 16,
            ..ModelConfig::desk()
        }
    }

    pub fn levels(&self) -> usize {
        self.dims.len()
    }

    /// Spatial side length of the token grid at encoder level `l`.
    pub fn side(&self, level: usize) -> usize {
        self.img_size / self.patch_size / (1 << level)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.in_channels == 0 || self.num_classes < 2 {
            return bad("need at least one input channel and two classes".into());
        }
        if self.dims.is_empty() || self.depths.len() != self.dims.len() {
            return bad(format!("depths {:?} and dims {:?} must have equal nonzero length", self.depths, self.dims));
        }
        if self.dims.iter().any(|&d| d == 0 || d % 4 != 0) {
            return bad(format!("every stage width must be a positive multiple of 4, got {:?}", self.dims));
        }
        if self.dims.windows(2).any(|w| w[1] != 2 * w[0]) {
            return bad(format!("stage widths must double per level, got {:?}", self.dims));
        }
        if self.patch_size == 0 || self.d_state == 0 || self.ssm_expand == 0 || self.mfe_ffn_ratio == 0 {
            return bad("patch size, d_state, ssm_expand and mfe_ffn_ratio must be positive".into());
        }
        let unit = self.patch_size << (self.levels() - 1);
        if self.img_size == 0 || self.img_size % unit != 0 {
            return bad(format!("image size {} must be a multiple of {unit}", self.img_size));
        }
        if !(self.mfe_dw_noise >= 0.0) {
            return bad("mfe_dw_noise must be non-negative".into());
        }
        Ok(())
    }
}
