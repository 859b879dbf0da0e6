//! Axial slices and on-disk phantom datasets.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::nrrd::{read_nrrd, write_nrrd};
use super::phantom::{generate_phantom, LesionClass, PhantomConfig};
use super::splits::{make_splits, Split, SplitManifest};
use super::volume::{HounsfieldVolume, LabelVolume};
use crate::error::{Error, Result};
use crate::rng;

/// One axial slice, row-major with `y` as the row index.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub index: usize,
    /// `(height, width) = (ny, nx)`.
    pub shape: [usize; 2],
    /// In-plane spacing `(sy, sx)`, matching `shape`.
    pub spacing_mm: [f64; 2],
    pub hu: Vec<i16>,
    pub labels: Vec<u8>,
}

/// Axial slices in index order. Slice `k` holds `volume[:, :, k]`.
pub fn slice_iter<'a>(
    volume: &'a HounsfieldVolume,
    labels: &'a LabelVolume,
) -> Result<impl ExactSizeIterator<Item = Slice> + 'a> {
    if volume.dims() != labels.dims() {
        return Err(Error::InvalidVolume(format!(
            "image dims {:?} differ from label dims {:?}",
            volume.dims(),
            labels.dims()
        )));
    }
    let [nx, ny, nz] = volume.dims();
    let [sx, sy, _] = volume.spacing();
    let plane = nx * ny;
    Ok((0..nz).map(move |k| Slice {
        index: k,
        shape: [ny, nx],
        spacing_mm: [sy, sx],
        hu: volume.hu()[k * plane..(k + 1) * plane].to_vec(),
        labels: labels.labels()[k * plane..(k + 1) * plane].to_vec(),
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub id: String,
    pub image: String,
    pub label: String,
    pub class: LesionClass,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub phantom: PhantomConfig,
    pub cases: Vec<CaseEntry>,
    pub splits: SplitManifest,
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub cases: usize,
    /// `Mixed` assigns each case a single class at random.
    pub class: LesionClass,
    pub ratios: [f64; 3],
    pub seed: u64,
    pub phantom: PhantomConfig,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            cases: 40,
            class: LesionClass::Mixed,
            ratios: [0.77, 0.08, 0.15],
            seed: 0,
            phantom: PhantomConfig::default(),
        }
    }
}

/// Case configs without touching the disk.
pub fn plan_cases(spec: &DatasetSpec) -> Result<Vec<(CaseEntry, PhantomConfig)>> {
    if spec.cases == 0 {
        return Err(Error::InvalidSplit("a dataset needs at least one case".into()));
    }
    (0..spec.cases)
        .map(|i| {
            let id = format!("case_{i:03}");
            let seed = rng::derive(spec.seed, i as u64);
            let class = match spec.class {
                LesionClass::Mixed => {
                    let mut r = rng::seeded(rng::derive(spec.seed, (1 << 32) | i as u64));
                    if r.gen_bool(0.5) {
                        LesionClass::Tumor
                    } else {
                        LesionClass::Cyst
                    }
                }
                c => c,
            };
            let cfg = PhantomConfig {
                lesion_class: class,
                seed,
                ..spec.phantom.clone()
            };
            cfg.validate()?;
            let entry = CaseEntry {
                image: format!("{id}_image.nrrd"),
                label: format!("{id}_label.nrrd"),
                id,
                class,
                seed,
            };
            Ok((entry, cfg))
        })
        .collect()
}

/// Generate phantoms, NRRD pairs and `manifest.json` under `dir`.
pub fn generate_dataset(dir: &Path, spec: &DatasetSpec) -> Result<DatasetManifest> {
    let plan = plan_cases(spec)?;
    let ids: Vec<String> = plan.iter().map(|(e, _)| e.id.clone()).collect();
    let splits = make_splits(&ids, spec.ratios, rng::derive(spec.seed, u64::MAX))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (entry, cfg) in &plan {
        let (hu, labels) = generate_phantom(cfg)?;
        write_nrrd(&hu, &dir.join(&entry.image))?;
        write_nrrd(&labels, &dir.join(&entry.label))?;
    }
    let manifest = DatasetManifest {
        seed: spec.seed,
        phantom: spec.phantom.clone(),
        cases: plan.into_iter().map(|(e, _)| e).collect(),
        splits,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// A dataset on disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        Ok(Dataset {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn case(&self, id: &str) -> Result<&CaseEntry> {
        self.manifest
            .cases
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::InvalidSplit(format!("unknown case `{id}`")))
    }

    pub fn load(&self, id: &str) -> Result<(HounsfieldVolume, LabelVolume)> {
        let entry = self.case(id)?;
        let hu = read_nrrd(&self.root.join(&entry.image))?.into_hounsfield()?;
        let labels = read_nrrd(&self.root.join(&entry.label))?.into_labels()?;
        if hu.dims() != labels.dims() {
            return Err(Error::InvalidVolume(format!("case `{id}` image and label dims differ")));
        }
        Ok((hu, labels))
    }

    pub fn ids(&self, split: Split) -> &[String] {
        self.manifest.splits.get(split)
    }

    /// Every slice of every case in `split`, in manifest order.
    pub fn slices(&self, split: Split) -> Result<Vec<Slice>> {
        let mut out = Vec::new();
        for id in self.ids(split) {
            let (hu, labels) = self.load(id)?;
            out.extend(slice_iter(&hu, &labels)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct::volume::Geometry;

    #[test]
    fn slices_match_direct_indexing() {
        let g = Geometry::new([8, 8, 4], [0.5, 0.7, 2.0]).unwrap();
        let hu: Vec<i16> = (0..256).map(|i| (i * 7 % 300) as i16 - 100).collect();
        let lab: Vec<u8> = (0..256).map(|i| (i % 3) as u8).collect();
        let v = HounsfieldVolume::new(g, hu.clone()).unwrap();
        let l = LabelVolume::new(g, lab).unwrap();
        let slices: Vec<Slice> = slice_iter(&v, &l).unwrap().collect();
        assert_eq!(slices.len(), 4);
        for s in &slices {
            assert_eq!(s.shape, [8, 8]);
            assert_eq!(s.spacing_mm, [0.7, 0.5]);
            for y in 0..8 {
                for x in 0..8 {
                    assert_eq!(s.hu[y * 8 + x], v.get(x, y, s.index));
                    assert_eq!(s.labels[y * 8 + x], l.get(x, y, s.index));
                }
            }
        }
        let joined: Vec<i16> = slices.iter().flat_map(|s| s.hu.clone()).collect();
        assert_eq!(joined, hu);
    }

    #[test]
    fn mismatched_dims_rejected() {
        let v = HounsfieldVolume::new(Geometry::new([2, 2, 2], [1.0; 3]).unwrap(), vec![0; 8]).unwrap();
        let l = LabelVolume::new(Geometry::new([2, 2, 1], [1.0; 3]).unwrap(), vec![0; 4]).unwrap();
        assert!(slice_iter(&v, &l).is_err());
    }

    #[test]
    fn zero_cases_rejected() {
        let spec = DatasetSpec {
            cases: 0,
            ..Default::default()
        };
        assert!(plan_cases(&spec).is_err());
    }
}
