//! Synthetic head-and-neck phantoms with ellipsoidal tumor and cyst lesions.
//!
//! The background is an axial elliptic cylinder: a subcutaneous fat ring
//! around a muscle core, an optional posterior bone slab (vertebra) and an
//! optional anterior air pocket (airway), surrounded by air. Lesions are
//! non-overlapping ellipsoids rotated in-plane and placed fully inside the
//! soft-tissue core. Cysts are uniform and get a one-voxel blended rim just
//! outside their labeled interior; tumors carry a low-frequency speckle.
//! Gaussian noise is added last and the result is rounded and clamped to
//! the HU range.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::volume::{Geometry, HounsfieldVolume, LabelVolume, CYST, HU_MAX, HU_MIN, TUMOR};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LesionClass {
    Tumor,
    Cyst,
    /// Each lesion draws its own class.
    Mixed,
}

/// Mean and standard deviation in HU.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub const fn new(mean: f64, std: f64) -> Self {
        Gaussian { mean, std }
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        self.mean + self.std * rng::normal(rng)
    }
}

/// Per-tissue HU distributions. Fat, muscle and bone are drawn once per
/// phantom; cyst and tumor values once per lesion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TissueHu {
    pub air: f64,
    pub fat: Gaussian,
    pub muscle: Gaussian,
    pub bone: Gaussian,
    /// Uniform interior range `[lo, hi]`.
    pub cyst: (f64, f64),
    pub tumor: Gaussian,
    pub tumor_speckle: f64,
}

impl Default for TissueHu {
    fn default() -> Self {
        TissueHu {
            air: -1000.0,
            fat: Gaussian::new(-80.0, 15.0),
            muscle: Gaussian::new(50.0, 10.0),
            bone: Gaussian::new(900.0, 150.0),
            cyst: (0.0, 20.0),
            tumor: Gaussian::new(55.0, 25.0),
            tumor_speckle: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub lesion_class: LesionClass,
    /// Inclusive range of lesion counts.
    pub lesion_count: (usize, usize),
    /// Semi-axis range in mm, drawn independently per axis.
    pub radius_mm: (f64, f64),
    pub tissue: TissueHu,
    pub noise_std: f64,
    pub bone: bool,
    pub air_pocket: bool,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            dims: [64, 64, 12],
            spacing_mm: [1.0, 1.0, 2.5],
            lesion_class: LesionClass::Mixed,
            lesion_count: (1, 2),
            radius_mm: (4.0, 9.0),
            tissue: TissueHu::default(),
            noise_std: 5.0,
            bone: true,
            air_pocket: true,
            seed: 0,
        }
    }
}

/// One placed lesion.
#[derive(Clone, Debug, PartialEq)]
pub struct Lesion {
    pub class: u8,
    pub center_mm: [f64; 3],
    pub radii_mm: [f64; 3],
    /// In-plane rotation in radians.
    pub angle: f64,
    /// Interior base HU before speckle.
    pub base_hu: f64,
}

impl Lesion {
    /// Squared normalized radius of a point; `<= 1` is inside.
    pub fn rho2(&self, p: [f64; 3]) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let d = [p[0] - self.center_mm[0], p[1] - self.center_mm[1], p[2] - self.center_mm[2]];
        let u = c * d[0] + s * d[1];
        let v = -s * d[0] + c * d[1];
        (u / self.radii_mm[0]).powi(2) + (v / self.radii_mm[1]).powi(2) + (d[2] / self.radii_mm[2]).powi(2)
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.rho2(p) <= 1.0
    }
}

/// Generator output plus the pre-noise field, for inspection and tests.
#[derive(Clone, Debug)]
pub struct PhantomDetail {
    pub volume: HounsfieldVolume,
    pub labels: LabelVolume,
    pub clean_hu: Vec<f64>,
    pub lesions: Vec<Lesion>,
}

const MAX_PLACEMENT_TRIES: usize = 500;

impl PhantomConfig {
    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::new(self.dims, self.spacing_mm)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.geometry()?;
        let (rlo, rhi) = self.radius_mm;
        if !(rlo > 0.0) || !(rhi >= rlo) || !rhi.is_finite() {
            return Err(Error::Config(format!("radius range ({rlo}, {rhi}) must be positive and ordered")));
        }
        let extent = (0..3).map(|a| g.dims[a] as f64 * g.spacing_mm[a]).fold(f64::INFINITY, f64::min);
        if rhi >= extent / 2.0 {
            return Err(Error::Config(format!(
                "radius {rhi} mm does not fit the smallest extent {extent} mm"
            )));
        }
        let (lo, hi) = self.tissue.cyst;
        if !(0.0..=20.0).contains(&lo) || !(lo..=20.0).contains(&hi) {
            return Err(Error::Config(format!("cyst range ({lo}, {hi}) must lie within [0, 20] HU")));
        }
        if self.lesion_count.0 > self.lesion_count.1 {
            return Err(Error::Config("lesion count range is inverted".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise std must be non-negative".into()));
        }
        Ok(())
    }
}

/// The fixed anatomy of one phantom, in mm.
struct Anatomy {
    center: [f64; 2],
    outer: [f64; 2],
    inner: [f64; 2],
    bone: Option<([f64; 2], [f64; 2])>,
    air: Option<([f64; 2], [f64; 2])>,
    fat_hu: f64,
    muscle_hu: f64,
    bone_hu: f64,
    air_hu: f64,
}

fn in_ellipse(p: [f64; 2], c: [f64; 2], r: [f64; 2]) -> bool {
    ((p[0] - c[0]) / r[0]).powi(2) + ((p[1] - c[1]) / r[1]).powi(2) <= 1.0
}

impl Anatomy {
    fn new(cfg: &PhantomConfig, rng: &mut Rng) -> Self {
        let ext = [cfg.dims[0] as f64 * cfg.spacing_mm[0], cfg.dims[1] as f64 * cfg.spacing_mm[1]];
        let center = [ext[0] / 2.0, ext[1] / 2.0];
        let outer = [0.45 * ext[0], 0.40 * ext[1]];
        let inner = [0.86 * outer[0], 0.86 * outer[1]];
        // y grows posteriorly
        let bone = cfg.bone.then(|| {
            let r = [0.22 * inner[0], 0.16 * inner[1]];
            ([center[0], center[1] + inner[1] - r[1] - 0.04 * inner[1]], r)
        });
        let air = cfg.air_pocket.then(|| {
            let r = [0.12 * inner[0], 0.10 * inner[1]];
            ([center[0], center[1] - 0.55 * inner[1]], r)
        });
        let t = &cfg.tissue;
        Anatomy {
            center,
            outer,
            inner,
            bone,
            air,
            fat_hu: t.fat.sample(rng),
            muscle_hu: t.muscle.sample(rng),
            bone_hu: t.bone.sample(rng),
            air_hu: t.air,
        }
    }

    fn background_hu(&self, p: [f64; 2]) -> f64 {
        if !in_ellipse(p, self.center, self.outer) {
            return self.air_hu;
        }
        if !in_ellipse(p, self.center, self.inner) {
            return self.fat_hu;
        }
        if self.bone.is_some_and(|(c, r)| in_ellipse(p, c, r)) {
            return self.bone_hu;
        }
        if self.air.is_some_and(|(c, r)| in_ellipse(p, c, r)) {
            return self.air_hu;
        }
        self.muscle_hu
    }

    /// Muscle core, clear of bone and air by `margin` mm.
    fn in_soft_tissue(&self, p: [f64; 2], margin: f64) -> bool {
        let grow = |r: [f64; 2]| [r[0] + margin, r[1] + margin];
        let shrink = [self.inner[0] - margin, self.inner[1] - margin];
        in_ellipse(p, self.center, shrink)
            && !self.bone.is_some_and(|(c, r)| in_ellipse(p, c, grow(r)))
            && !self.air.is_some_and(|(c, r)| in_ellipse(p, c, grow(r)))
    }
}

fn voxel_mm(g: &Geometry, x: usize, y: usize, z: usize) -> [f64; 3] {
    [
        (x as f64 + 0.5) * g.spacing_mm[0],
        (y as f64 + 0.5) * g.spacing_mm[1],
        (z as f64 + 0.5) * g.spacing_mm[2],
    ]
}

/// Voxel index ranges covering a box of half-size `half` around `c`.
fn voxel_box(g: &Geometry, c: [f64; 3], half: f64) -> [(usize, usize); 3] {
    let mut out = [(0, 0); 3];
    for a in 0..3 {
        let lo = ((c[a] - half) / g.spacing_mm[a] - 0.5).floor().max(0.0) as usize;
        let hi = (((c[a] + half) / g.spacing_mm[a] - 0.5).ceil().max(0.0) as usize).min(g.dims[a] - 1);
        out[a] = (lo, hi);
    }
    out
}

/// Normalized radius at which the cyst rim fades out.
fn rim_rho(lesion: &Lesion, g: &Geometry) -> f64 {
    let smin = g.spacing_mm.iter().cloned().fold(f64::INFINITY, f64::min);
    let rmin = lesion.radii_mm.iter().cloned().fold(f64::INFINITY, f64::min);
    1.0 + smin / rmin
}

struct Speckle {
    waves: [([f64; 3], f64); 3],
    amplitude: f64,
}

impl Speckle {
    fn new(rng: &mut Rng, lesion: &Lesion, amplitude: f64) -> Self {
        let rmean = lesion.radii_mm.iter().sum::<f64>() / 3.0;
        let mut wave = || {
            let wavelength = rng::uniform(rng, 1.0 * rmean, 2.5 * rmean);
            let theta = rng::uniform(rng, 0.0, std::f64::consts::PI);
            let phi = rng::uniform(rng, 0.0, 2.0 * std::f64::consts::PI);
            let k = 2.0 * std::f64::consts::PI / wavelength;
            let dir = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
            let phase = rng::uniform(rng, 0.0, 2.0 * std::f64::consts::PI);
            ([k * dir[0], k * dir[1], k * dir[2]], phase)
        };
        Speckle {
            waves: [wave(), wave(), wave()],
            amplitude,
        }
    }

    fn at(&self, p: [f64; 3]) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|(k, ph)| (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + ph).cos())
            .sum();
        self.amplitude * s / 3.0
    }
}

/// Rejection-sample a lesion whose rim region sits in soft tissue, inside
/// the volume, and clear of every occupied voxel.
fn place_lesion(
    cfg: &PhantomConfig,
    g: &Geometry,
    anatomy: &Anatomy,
    occupied: &[bool],
    class: u8,
    rng: &mut Rng,
) -> Result<Lesion> {
    let (rlo, rhi) = cfg.radius_mm;
    let ext: Vec<f64> = (0..3).map(|a| g.dims[a] as f64 * g.spacing_mm[a]).collect();
    let smax = g.spacing_mm.iter().cloned().fold(0.0, f64::max);
    for _ in 0..MAX_PLACEMENT_TRIES {
        let radii_mm = [
            rng::uniform(rng, rlo, rhi),
            rng::uniform(rng, rlo, rhi),
            rng::uniform(rng, rlo, rhi),
        ];
        let center_mm = [
            rng::uniform(rng, anatomy.center[0] - anatomy.inner[0], anatomy.center[0] + anatomy.inner[0]),
            rng::uniform(rng, anatomy.center[1] - anatomy.inner[1], anatomy.center[1] + anatomy.inner[1]),
            rng::uniform(rng, radii_mm[2], ext[2] - radii_mm[2]),
        ];
        let angle = rng::uniform(rng, 0.0, std::f64::consts::PI);
        let mut lesion = Lesion {
            class,
            center_mm,
            radii_mm,
            angle,
            base_hu: 0.0,
        };
        let rim = rim_rho(&lesion, g);
        let rmax = radii_mm.iter().cloned().fold(0.0, f64::max);
        let reach = rmax * rim + smax;
        // the full rim must lie inside the volume along z
        if center_mm[2] - radii_mm[2] * rim < 0.0 || center_mm[2] + radii_mm[2] * rim > ext[2] {
            continue;
        }
        let [(x0, x1), (y0, y1), (z0, z1)] = voxel_box(g, center_mm, reach);
        let mut ok = true;
        'scan: for z in z0..=z1 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = voxel_mm(g, x, y, z);
                    if lesion.rho2(p) > rim * rim {
                        continue;
                    }
                    if occupied[g.index(x, y, z)] || !anatomy.in_soft_tissue([p[0], p[1]], smax) {
                        ok = false;
                        break 'scan;
                    }
                }
            }
        }
        if ok {
            lesion.base_hu = match class {
                CYST => rng::uniform(rng, cfg.tissue.cyst.0, cfg.tissue.cyst.1),
                _ => cfg.tissue.tumor.sample(rng),
            };
            return Ok(lesion);
        }
    }
    Err(Error::InfeasibleGeometry(format!(
        "no room for a lesion with radii in [{rlo}, {rhi}] mm after {MAX_PLACEMENT_TRIES} tries"
    )))
}

pub fn generate_phantom_detail(cfg: &PhantomConfig) -> Result<PhantomDetail> {
    cfg.validate()?;
    let g = cfg.geometry()?;
    let mut rng = rng::seeded(cfg.seed);
    let anatomy = Anatomy::new(cfg, &mut rng);

    let mut clean = vec![0.0; g.len()];
    for z in 0..g.dims[2] {
        for y in 0..g.dims[1] {
            for x in 0..g.dims[0] {
                let p = voxel_mm(&g, x, y, z);
                clean[g.index(x, y, z)] = anatomy.background_hu([p[0], p[1]]);
            }
        }
    }

    let (nlo, nhi) = cfg.lesion_count;
    let count = rng.gen_range(nlo..=nhi);
    let mut labels = vec![0u8; g.len()];
    let mut occupied = vec![false; g.len()];
    let mut lesions = Vec::with_capacity(count);
    for _ in 0..count {
        let class = match cfg.lesion_class {
            LesionClass::Tumor => TUMOR,
            LesionClass::Cyst => CYST,
            LesionClass::Mixed => {
                if rng.gen_bool(0.5) {
                    TUMOR
                } else {
                    CYST
                }
            }
        };
        let lesion = place_lesion(cfg, &g, &anatomy, &occupied, class, &mut rng)?;
        let speckle = (class == TUMOR).then(|| Speckle::new(&mut rng, &lesion, cfg.tissue.tumor_speckle));
        let rim = rim_rho(&lesion, &g);
        let rmax = lesion.radii_mm.iter().cloned().fold(0.0, f64::max);
        let smax = g.spacing_mm.iter().cloned().fold(0.0, f64::max);
        let [(x0, x1), (y0, y1), (z0, z1)] = voxel_box(&g, lesion.center_mm, rmax * rim + smax);
        for z in z0..=z1 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = voxel_mm(&g, x, y, z);
                    let rho = lesion.rho2(p).sqrt();
                    if rho > rim {
                        continue;
                    }
                    let i = g.index(x, y, z);
                    occupied[i] = true;
                    if rho <= 1.0 {
                        labels[i] = class;
                        clean[i] = lesion.base_hu + speckle.as_ref().map_or(0.0, |s| s.at(p));
                    } else if class == CYST {
                        let w = (rim - rho) / (rim - 1.0);
                        clean[i] = w * lesion.base_hu + (1.0 - w) * clean[i];
                    }
                }
            }
        }
        lesions.push(lesion);
    }

    let hu = clean
        .iter()
        .map(|&v| {
            let noisy = v + cfg.noise_std * rng::normal(&mut rng);
            noisy.round().clamp(HU_MIN as f64, HU_MAX as f64) as i16
        })
        .collect();
    Ok(PhantomDetail {
        volume: HounsfieldVolume::new(g, hu)?,
        labels: LabelVolume::new(g, labels)?,
        clean_hu: clean,
        lesions,
    })
}

pub fn generate_phantom(cfg: &PhantomConfig) -> Result<(HounsfieldVolume, LabelVolume)> {
    let d = generate_phantom_detail(cfg)?;
    Ok((d.volume, d.labels))
}
