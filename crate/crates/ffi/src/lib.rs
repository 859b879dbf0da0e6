//! C ABI over `wemf`: volumes, windowing, models and mask metrics.
//!
//! Every fallible function returns a [`WemfStatus`]; on failure the message
//! is available from [`wemf_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. A model handle
//! must not be shared between threads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use wemf::config::RunConfig;
use wemf::ct::{read_nrrd, Geometry, HounsfieldVolume};
use wemf::metrics::evaluate_masks;
use wemf::net::{count_params, Wemf};
use wemf::tensor::{read_checkpoint, ParamStore};
use wemf::train::predict_volume;
use wemf::windowing::{TriWindowConfig, WindowSpec};
use wemf::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WemfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Numeric = 5,
    Panic = 6,
}

/// A CT volume in Hounsfield units.
pub struct WemfVolume {
    hu: HounsfieldVolume,
}

/// A network with its weights and input windows.
pub struct WemfModel {
    model: Wemf,
    params: ParamStore,
    windows: TriWindowConfig,
}

/// Binary-mask metrics. `hd95_mm` is NaN when exactly one mask is empty.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WemfMaskMetrics {
    pub dsc: f64,
    pub iou: f64,
    pub hd95_mm: f64,
    pub nsd: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub specificity: f64,
    pub precision: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(WemfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => WemfStatus::Io,
            Error::Config(_) => WemfStatus::InvalidArgument,
            e if e.is_data_error() => WemfStatus::Data,
            _ => WemfStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(WemfStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WemfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WemfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            WemfStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(WemfStatus::NullPointer, format!("`{what}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    non_null(p, what)?;
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{what}` is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wemf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from this thread.
#[no_mangle]
pub extern "C" fn wemf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Map one HU value through a window into `[0, 1]`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn wemf_window_map(level: f64, width: f64, hu: f64, out: *mut f64) -> WemfStatus {
    guard(|| {
        non_null(out, "out")?;
        let spec = WindowSpec::new(level, width)?;
        *out = spec.map(hu);
        Ok(())
    })
}

/// Read a `short` NRRD volume.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn wemf_volume_read(path: *const c_char, out: *mut *mut WemfVolume) -> WemfStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path, "path")?;
        let hu = read_nrrd(&path)?.into_hounsfield()?;
        *out = Box::into_raw(Box::new(WemfVolume { hu }));
        Ok(())
    })
}

/// Build a volume from `dims[0] * dims[1] * dims[2]` HU values, x fastest.
///
/// # Safety
/// `dims` and `spacing_mm` must point to 3 values, `hu` to the full voxel
/// count, and `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn wemf_volume_from_hu(
    dims: *const usize,
    spacing_mm: *const f64,
    hu: *const i16,
    out: *mut *mut WemfVolume,
) -> WemfStatus {
    guard(|| {
        non_null(dims, "dims")?;
        non_null(spacing_mm, "spacing_mm")?;
        non_null(hu, "hu")?;
        non_null(out, "out")?;
        let d = [*dims, *dims.add(1), *dims.add(2)];
        let s = [*spacing_mm, *spacing_mm.add(1), *spacing_mm.add(2)];
        let g = Geometry::new(d, s)?;
        let values = slice::from_raw_parts(hu, g.len()).to_vec();
        *out = Box::into_raw(Box::new(WemfVolume { hu: HounsfieldVolume::new(g, values)? }));
        Ok(())
    })
}

/// Write dims (3 values) and spacing (3 values); either pointer may be NULL.
///
/// # Safety
/// `volume` must come from this library; non-null outputs must hold 3 values.
#[no_mangle]
pub unsafe extern "C" fn wemf_volume_geometry(
    volume: *const WemfVolume,
    dims: *mut usize,
    spacing_mm: *mut f64,
) -> WemfStatus {
    guard(|| {
        non_null(volume, "volume")?;
        let g = (*volume).hu.geometry();
        for a in 0..3 {
            if !dims.is_null() {
                *dims.add(a) = g.dims[a];
            }
            if !spacing_mm.is_null() {
                *spacing_mm.add(a) = g.spacing_mm[a];
            }
        }
        Ok(())
    })
}

/// Window every voxel into three channels, voxel-major (`out[3 * i + c]`).
/// `windows` holds `(level, width)` for each channel, or NULL for the
/// default, abdomen and spine windows. `len` must equal `3 * voxels`.
///
/// # Safety
/// `volume` must come from this library, `windows` (if non-null) must hold
/// 6 values and `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn wemf_volume_window(
    volume: *const WemfVolume,
    windows: *const f64,
    out: *mut f64,
    len: usize,
) -> WemfStatus {
    guard(|| {
        non_null(volume, "volume")?;
        non_null(out, "out")?;
        let cfg = if windows.is_null() {
            TriWindowConfig::default()
        } else {
            let w = slice::from_raw_parts(windows, 6);
            TriWindowConfig {
                windows: [
                    WindowSpec::new(w[0], w[1])?,
                    WindowSpec::new(w[2], w[3])?,
                    WindowSpec::new(w[4], w[5])?,
                ],
            }
        };
        let hu = (*volume).hu.hu();
        if len != 3 * hu.len() {
            return Err(invalid(format!("len {len} != 3 x {} voxels", hu.len())));
        }
        let out = slice::from_raw_parts_mut(out, len);
        for (i, &v) in hu.iter().enumerate() {
            for (c, spec) in cfg.windows.iter().enumerate() {
                out[3 * i + c] = spec.map(v as f64);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `volume` must come from this library or be NULL, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn wemf_volume_free(volume: *mut WemfVolume) {
    if !volume.is_null() {
        drop(Box::from_raw(volume));
    }
}

/// Create a model from a run-configuration JSON document (NULL for the
/// defaults) with weights initialised from `seed`.
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn wemf_model_new(config_json: *const c_char, seed: u64, out: *mut *mut WemfModel) -> WemfStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = if config_json.is_null() {
            RunConfig::default()
        } else {
            let text = CStr::from_ptr(config_json).to_str().map_err(|_| invalid("config is not UTF-8"))?;
            RunConfig::from_json(text).map_err(|e| invalid(e.to_string()))?
        };
        let model = Wemf::new(cfg.model)?;
        let params = model.init(seed);
        *out = Box::into_raw(Box::new(WemfModel { model, params, windows: cfg.windows }));
        Ok(())
    })
}

/// Replace the weights with a checkpoint; the model is unchanged on failure.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn wemf_model_load(model: *mut WemfModel, path: *const c_char) -> WemfStatus {
    guard(|| {
        non_null(model, "model")?;
        let path = path_arg(path, "path")?;
        let store = read_checkpoint(&path)?;
        (*model).model.check_weights(&store)?;
        (*model).params = store;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and `out` be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn wemf_model_param_count(model: *const WemfModel, out: *mut usize) -> WemfStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = count_params(&(*model).params);
        Ok(())
    })
}

/// In-plane size the model expects.
///
/// # Safety
/// `model` must come from this library and `out` be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn wemf_model_img_size(model: *const WemfModel, out: *mut usize) -> WemfStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).model.cfg.img_size;
        Ok(())
    })
}

/// Segment every axial slice into `labels` (0 background, 1 tumor, 2 cyst),
/// in volume order. `len` must equal the voxel count.
///
/// # Safety
/// `model` and `volume` must come from this library; `labels` must be valid
/// for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn wemf_model_segment(
    model: *const WemfModel,
    volume: *const WemfVolume,
    labels: *mut u8,
    len: usize,
) -> WemfStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(volume, "volume")?;
        non_null(labels, "labels")?;
        let m = &*model;
        let hu = &(*volume).hu;
        if len != hu.geometry().len() {
            return Err(invalid(format!("len {len} != {} voxels", hu.geometry().len())));
        }
        let bound = m.params.bind(false)?;
        let pred = predict_volume(&m.model, &bound, hu, &m.windows)?;
        slice::from_raw_parts_mut(labels, len).copy_from_slice(pred.labels());
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be NULL, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn wemf_model_free(model: *mut WemfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Score two masks (nonzero = foreground) of `dims[0] * dims[1] * dims[2]`
/// voxels, x fastest.
///
/// # Safety
/// `dims` and `spacing_mm` must hold 3 values, `pred` and `reference` the
/// full voxel count, and `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn wemf_evaluate_masks(
    pred: *const u8,
    reference: *const u8,
    dims: *const usize,
    spacing_mm: *const f64,
    tau_mm: f64,
    out: *mut WemfMaskMetrics,
) -> WemfStatus {
    guard(|| {
        for (p, name) in [(pred, "pred"), (reference, "reference")] {
            non_null(p, name)?;
        }
        non_null(dims, "dims")?;
        non_null(spacing_mm, "spacing_mm")?;
        non_null(out, "out")?;
        let d = [*dims, *dims.add(1), *dims.add(2)];
        let s = [*spacing_mm, *spacing_mm.add(1), *spacing_mm.add(2)];
        let g = Geometry::new(d, s)?;
        let n = g.len();
        let mask = |p: *const u8| slice::from_raw_parts(p, n).iter().map(|v| *v != 0).collect::<Vec<_>>();
        let m = evaluate_masks(&mask(pred), &mask(reference), d, s, tau_mm)?;
        *out = WemfMaskMetrics {
            dsc: m.dsc,
            iou: m.iou,
            hd95_mm: m.hd95_mm.unwrap_or(f64::NAN),
            nsd: m.nsd,
            accuracy: m.accuracy,
            recall: m.recall,
            specificity: m.specificity,
            precision: m.precision,
        };
        Ok(())
    })
}
