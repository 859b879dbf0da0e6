use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HU_MIN: i16 = -1024;
pub const HU_MAX: i16 = 3071;

/// Class ids used in label volumes.
pub const BACKGROUND: u8 = 0;
pub const TUMOR: u8 = 1;
pub const CYST: u8 = 2;
pub const NUM_CLASSES: usize = 3;

/// Voxel grid geometry: extents `(nx, ny, nz)` with x varying fastest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidVolume(format!("dims must be positive, got {dims:?}")));
        }
        if spacing_mm.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidVolume(format!("spacing must be positive, got {spacing_mm:?}")));
        }
        Ok(Geometry { dims, spacing_mm })
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }
}

/// CT intensities in Hounsfield units, clamped to `[-1024, 3071]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HounsfieldVolume {
    geometry: Geometry,
    hu: Vec<i16>,
}

impl HounsfieldVolume {
    pub fn new(geometry: Geometry, hu: Vec<i16>) -> Result<Self> {
        if hu.len() != geometry.len() {
            return Err(Error::InvalidVolume(format!(
                "{} voxels for dims {:?}",
                hu.len(),
                geometry.dims
            )));
        }
        if let Some(v) = hu.iter().find(|v| !(HU_MIN..=HU_MAX).contains(*v)) {
            return Err(Error::InvalidVolume(format!("HU value {v} outside [{HU_MIN}, {HU_MAX}]")));
        }
        Ok(HounsfieldVolume { geometry, hu })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing_mm
    }

    pub fn hu(&self) -> &[i16] {
        &self.hu
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> i16 {
        self.hu[self.geometry.index(x, y, z)]
    }
}

/// Per-voxel class ids in `{0, 1, 2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    geometry: Geometry,
    labels: Vec<u8>,
}

impl LabelVolume {
    pub fn new(geometry: Geometry, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != geometry.len() {
            return Err(Error::InvalidVolume(format!(
                "{} labels for dims {:?}",
                labels.len(),
                geometry.dims
            )));
        }
        if let Some(v) = labels.iter().find(|&&v| v as usize >= NUM_CLASSES) {
            return Err(Error::InvalidVolume(format!("label {v} outside class set")));
        }
        Ok(LabelVolume { geometry, labels })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing_mm
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.geometry.index(x, y, z)]
    }
}
