//! Tri-window CT enhancement.
//!
//! Each window clips Hounsfield units to `[L - W/2, L + W/2]` and rescales
//! the result to `[0, 1]`. Three clinical windows are stacked as channels to
//! form the network input. Nothing here is learnable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A window level/width pair in HU.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct WindowSpec {
    level: f64,
    width: f64,
}

impl WindowSpec {
    pub const DEFAULT: WindowSpec = WindowSpec { level: 25.0, width: 375.0 };
    pub const ABDOMEN_SOFT: WindowSpec = WindowSpec { level: 40.0, width: 350.0 };
    pub const SPINE_SOFT: WindowSpec = WindowSpec { level: 20.0, width: 300.0 };

    pub fn new(level: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() || !level.is_finite() {
            return Err(Error::Config(format!("window ({level}, {width}) needs finite level and width > 0")));
        }
        Ok(WindowSpec { level, width })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// `(hu_min, hu_max)`.
    pub fn bounds(&self) -> (f64, f64) {
        let half = self.width / 2.0;
        (self.level - half, self.level + half)
    }

    /// Clip then min-max normalize one HU value.
    pub fn map(&self, hu: f64) -> f64 {
        let (lo, hi) = self.bounds();
        ((hu.clamp(lo, hi) - lo) / self.width).min(1.0)
    }

    pub fn apply(&self, hu: &[f64]) -> Vec<f64> {
        hu.iter().map(|&v| self.map(v)).collect()
    }
}

impl TryFrom<(f64, f64)> for WindowSpec {
    type Error = Error;

    fn try_from((level, width): (f64, f64)) -> Result<Self> {
        WindowSpec::new(level, width)
    }
}

impl From<WindowSpec> for (f64, f64) {
    fn from(w: WindowSpec) -> Self {
        (w.level, w.width)
    }
}

pub fn window_bounds(spec: WindowSpec) -> (f64, f64) {
    spec.bounds()
}

pub fn apply_window(hu: &[f64], spec: WindowSpec) -> Vec<f64> {
    spec.apply(hu)
}

/// Quantize a normalized value to 8 bits for display, rounding half away
/// from zero.
pub fn to_uchar(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Channel names, in stacking order.
pub const CHANNEL_NAMES: [&str; 3] = ["default", "abdomen", "spine"];

/// The three windows, in channel order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TriWindowConfig {
    pub windows: [WindowSpec; 3],
}

impl Default for TriWindowConfig {
    fn default() -> Self {
        TriWindowConfig {
            windows: [WindowSpec::DEFAULT, WindowSpec::ABDOMEN_SOFT, WindowSpec::SPINE_SOFT],
        }
    }
}

impl TriWindowConfig {
    /// One window copied into all three channels, keeping the input arity.
    pub fn replicated(spec: WindowSpec) -> Self {
        TriWindowConfig { windows: [spec; 3] }
    }
}

/// Window a row-major `h x w` HU slice into a `[h, w, 3]` tensor.
pub fn tri_window_stack(hu: &[f64], h: usize, w: usize, cfg: &TriWindowConfig) -> Result<Tensor> {
    if hu.len() != h * w {
        return Err(Error::shape("tri_window_stack", format!("{} values for {h}x{w}", hu.len())));
    }
    if let Some(bad) = hu.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidVolume(format!("non-finite HU value {bad}")));
    }
    let mut data = Vec::with_capacity(h * w * 3);
    for &v in hu {
        data.extend(cfg.windows.iter().map(|win| win.map(v)));
    }
    Tensor::new(&[h, w, 3], data)
}
