//! CT volumes: NRRD I/O, synthetic phantoms and slice datasets.

pub mod dataset;
pub mod nrrd;
pub mod phantom;
pub mod splits;
pub mod volume;

pub use dataset::{generate_dataset, plan_cases, slice_iter, CaseEntry, Dataset, DatasetManifest, DatasetSpec, Slice};
pub use nrrd::{decode_nrrd, encode_nrrd, read_nrrd, write_nrrd, NrrdVolume, Voxels};
pub use phantom::{generate_phantom, generate_phantom_detail, Gaussian, LesionClass, PhantomConfig, PhantomDetail, TissueHu};
pub use splits::{make_splits, split_sizes, Split, SplitManifest};
pub use volume::{Geometry, HounsfieldVolume, LabelVolume, CYST, HU_MAX, HU_MIN, NUM_CLASSES, TUMOR, BACKGROUND};
