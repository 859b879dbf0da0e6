//! Surface extraction and symmetric surface distances with physical spacing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Foreground voxels with at least one face neighbour in the background.
/// Positions outside the grid count as background; axes of extent 1 are
/// ignored, so a single slice uses its in-plane 4-neighbourhood.
pub fn surface_voxels(mask: &[bool], dims: [usize; 3]) -> Vec<[usize; 3]> {
    let [nx, ny, nz] = dims;
    let at = |x: usize, y: usize, z: usize| mask[x + nx * (y + ny * z)];
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !at(x, y, z) {
                    continue;
                }
                let p = [x, y, z];
                let exposed = (0..3).any(|a| {
                    if dims[a] == 1 {
                        return false;
                    }
                    let mut lo = p;
                    let mut hi = p;
                    let lo_bg = if p[a] == 0 {
                        true
                    } else {
                        lo[a] -= 1;
                        !at(lo[0], lo[1], lo[2])
                    };
                    let hi_bg = if p[a] + 1 == dims[a] {
                        true
                    } else {
                        hi[a] += 1;
                        !at(hi[0], hi[1], hi[2])
                    };
                    lo_bg || hi_bg
                });
                if exposed {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Directed distances between two nonempty surfaces, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDistanceStats {
    pub pred_to_ref: Vec<f64>,
    pub ref_to_pred: Vec<f64>,
}

/// Result of a surface comparison: undefined when either surface is empty.
#[derive(Clone, Debug, PartialEq)]
pub enum SurfaceDistances {
    Defined(SurfaceDistanceStats),
    Undefined { pred_empty: bool, ref_empty: bool },
}

impl SurfaceDistances {
    pub fn stats(&self) -> Option<&SurfaceDistanceStats> {
        match self {
            SurfaceDistances::Defined(s) => Some(s),
            SurfaceDistances::Undefined { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DistancePath {
    /// All pairs between the two surfaces.
    Brute,
    /// Exact Euclidean distance transform of the target surface.
    Transform,
    /// Brute force for small surfaces, the transform otherwise.
    #[default]
    Auto,
}

const BRUTE_PAIR_LIMIT: usize = 1 << 22;

fn check(pred: &[bool], reference: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Result<()> {
    let n: usize = dims.iter().product();
    if pred.len() != n || reference.len() != n {
        return Err(Error::InvalidVolume(format!(
            "masks of {} and {} voxels for dims {dims:?}",
            pred.len(),
            reference.len()
        )));
    }
    if spacing.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidVolume(format!("spacing {spacing:?} must be positive")));
    }
    Ok(())
}

fn brute(from: &[[usize; 3]], to: &[[usize; 3]], spacing: [f64; 3]) -> Vec<f64> {
    from.iter()
        .map(|p| {
            let best = to
                .iter()
                .map(|q| {
                    let d = [
                        (p[0] as f64 - q[0] as f64) * spacing[0],
                        (p[1] as f64 - q[1] as f64) * spacing[1],
                        (p[2] as f64 - q[2] as f64) * spacing[2],
                    ];
                    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
                })
                .fold(f64::INFINITY, f64::min);
            best.sqrt()
        })
        .collect()
}

/// One pass of the lower-envelope squared distance transform along a line,
/// with sample spacing `s`.
fn edt_line(f: &[f64], s: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let s2 = s * s;
    let mut k = 0usize;
    let mut first = None;
    for q in 0..n {
        if f[q].is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(q0) = first else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    v[0] = q0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in q0 + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let sect = ((f[q] + s2 * (q * q) as f64) - (f[p] + s2 * (p * p) as f64)) / (2.0 * s2 * (q as f64 - p as f64));
            if sect <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = sect;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = (q as f64 - v[k] as f64) * s;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance (mm^2) from every voxel to the nearest marked voxel.
pub fn squared_distance_transform(marks: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let mut d: Vec<f64> = marks.iter().map(|&m| if m { 0.0 } else { f64::INFINITY }).collect();
    let strides = [1, dims[0], dims[0] * dims[1]];
    let longest = *dims.iter().max().unwrap();
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0; longest + 1];
    for axis in 0..3 {
        let n = dims[axis];
        let st = strides[axis];
        for start in 0..d.len() {
            if (start / st) % n != 0 {
                continue;
            }
            for i in 0..n {
                line[i] = d[start + i * st];
            }
            edt_line(&line[..n], spacing[axis], &mut out[..n], &mut v, &mut z);
            for i in 0..n {
                d[start + i * st] = out[i];
            }
        }
    }
    d
}

fn via_transform(from: &[[usize; 3]], to: &[[usize; 3]], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let mut marks = vec![false; dims.iter().product()];
    for q in to {
        marks[q[0] + dims[0] * (q[1] + dims[1] * q[2])] = true;
    }
    let d = squared_distance_transform(&marks, dims, spacing);
    from.iter()
        .map(|p| d[p[0] + dims[0] * (p[1] + dims[1] * p[2])].sqrt())
        .collect()
}

pub fn surface_distances(
    pred: &[bool],
    reference: &[bool],
    dims: [usize; 3],
    spacing: [f64; 3],
) -> Result<SurfaceDistances> {
    surface_distances_with_path(pred, reference, dims, spacing, DistancePath::Auto)
}

pub fn surface_distances_with_path(
    pred: &[bool],
    reference: &[bool],
    dims: [usize; 3],
    spacing: [f64; 3],
    path: DistancePath,
) -> Result<SurfaceDistances> {
    check(pred, reference, dims, spacing)?;
    let sp = surface_voxels(pred, dims);
    let sr = surface_voxels(reference, dims);
    if sp.is_empty() || sr.is_empty() {
        return Ok(SurfaceDistances::Undefined {
            pred_empty: sp.is_empty(),
            ref_empty: sr.is_empty(),
        });
    }
    let use_brute = match path {
        DistancePath::Brute => true,
        DistancePath::Transform => false,
        DistancePath::Auto => sp.len() * sr.len() <= BRUTE_PAIR_LIMIT,
    };
    let (mut a, mut b) = if use_brute {
        (brute(&sp, &sr, spacing), brute(&sr, &sp, spacing))
    } else {
        (via_transform(&sp, &sr, dims, spacing), via_transform(&sr, &sp, dims, spacing))
    };
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(SurfaceDistances::Defined(SurfaceDistanceStats {
        pred_to_ref: a,
        ref_to_pred: b,
    }))
}

/// Linear-interpolated percentile `q in [0, 1]` of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// 95th percentile of the pooled symmetric distances.
pub fn hd95(stats: &SurfaceDistanceStats) -> f64 {
    let mut pooled: Vec<f64> = stats.pred_to_ref.iter().chain(&stats.ref_to_pred).copied().collect();
    pooled.sort_by(f64::total_cmp);
    percentile(&pooled, 0.95)
}

/// Share of surface points, over both surfaces, within `tau_mm` of the other.
pub fn nsd(stats: &SurfaceDistanceStats, tau_mm: f64) -> f64 {
    let within = stats
        .pred_to_ref
        .iter()
        .chain(&stats.ref_to_pred)
        .filter(|&&d| d <= tau_mm)
        .count();
    within as f64 / (stats.pred_to_ref.len() + stats.ref_to_pred.len()) as f64
}
