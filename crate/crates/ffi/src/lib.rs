//! C ABI over the volaug library.
//!
//! Conventions:
//! * every fallible call returns a [`VolaugStatus`]; on failure the message is
//!   available from [`volaug_last_error`] on the same thread
//! * results come back through out-pointers; handles are freed with their
//!   matching `_free` function, strings with [`volaug_string_free`]
//! * configurations are TOML documents in the CLI's format; NULL means defaults
//! * panics never cross the boundary, they surface as `VOLAUG_STATUS_PANIC`

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use volaug::config::PipelineConfig;
use volaug::metrics::evaluate;
use volaug::source_match::{apply_sm, fit_source_histogram, IntensityHistogram};
use volaug::src_augment::augment_sample;
use volaug::volume::{
    load_labels, load_volume, normalize_ct, normalize_mr, preclip_ct, preclip_mr, save_labels, save_volume, Modality,
};
use volaug::{rng, Error, LabelMap, Volume};

pub const VOLAUG_MODALITY_CT: u32 = 0;
pub const VOLAUG_MODALITY_MR: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolaugStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimMismatch = 3,
    Io = 4,
    Format = 5,
    ConfigMismatch = 6,
    UndefinedMetric = 7,
    Panic = 8,
}

/// Float image.
pub struct VolaugVolume(Volume);

/// 16-bit label map.
pub struct VolaugLabels(LabelMap);

/// Fitted source cumulative histogram.
pub struct VolaugHistogram(IntensityHistogram);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(VolaugStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => VolaugStatus::Io,
            Error::Header { .. }
            | Error::SizeMismatch { .. }
            | Error::UnsupportedDtype(_)
            | Error::NonFinite { .. }
            | Error::LabelOverflow { .. }
            | Error::Json(_) => VolaugStatus::Format,
            Error::DimMismatch { .. } | Error::DimsTooSmall { .. } => VolaugStatus::DimMismatch,
            Error::ConfigMismatch(_) => VolaugStatus::ConfigMismatch,
            Error::UndefinedMetric(_) => VolaugStatus::UndefinedMetric,
            _ => VolaugStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(VolaugStatus::NullPointer, format!("{what} is NULL"))
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VolaugStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            VolaugStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            VolaugStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    let s = deref(p, "path")?;
    let s = CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(VolaugStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn triple<T: Copy>(p: *const T, what: &str) -> Result<[T; 3], Failure> {
    deref(p, what)?;
    Ok([*p, *p.add(1), *p.add(2)])
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    deref(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn config_arg(toml: *const c_char) -> Result<PipelineConfig, Failure> {
    if toml.is_null() {
        return Ok(PipelineConfig::default());
    }
    let text = CStr::from_ptr(toml)
        .to_str()
        .map_err(|_| Failure(VolaugStatus::InvalidArgument, "config is not UTF-8".into()))?;
    Ok(PipelineConfig::from_toml(text)?)
}

fn modality_arg(m: u32) -> Result<Modality, Failure> {
    match m {
        VOLAUG_MODALITY_CT => Ok(Modality::Ct),
        VOLAUG_MODALITY_MR => Ok(Modality::Mr),
        _ => Err(Failure(VolaugStatus::InvalidArgument, format!("unknown modality {m}"))),
    }
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let c = CString::new(s).map_err(|e| Failure(VolaugStatus::Format, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn volaug_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn volaug_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn volaug_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- volumes ----

/// Copies `len` floats (x fastest) into a new volume.
#[no_mangle]
pub unsafe extern "C" fn volaug_volume_new(
    dims: *const usize,
    spacing: *const f64,
    data: *const f32,
    len: usize,
    out: *mut *mut VolaugVolume,
) -> VolaugStatus {
    guard(|| {
        let dims = triple(dims, "dims")?;
        let spacing = triple(spacing, "spacing")?;
        let data = slice_arg(data, len, "data")?.to_vec();
        put(out, VolaugVolume(Volume::new(dims, spacing, data)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn volaug_volume_load(path: *const c_char, out: *mut *mut VolaugVolume) -> VolaugStatus {
    guard(|| put(out, VolaugVolume(load_volume(path_arg(path)?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn volaug_volume_save(vol: *const VolaugVolume, path: *const c_char) -> VolaugStatus {
    guard(|| Ok(save_volume(&deref(vol, "volume")?.0, path_arg(path)?)?))
}

#[no_mangle]
pub unsafe extern "C" fn volaug_volume_free(vol: *mut VolaugVolume) {
    if !vol.is_null() {
        drop(Box::from_raw(vol));
    }
}

/// Writes three extents to `out_dims`.
#[no_mangle]
pub unsafe extern "C" fn volaug_volume_dims(vol: *const VolaugVolume, out_dims: *mut usize) -> VolaugStatus {
    guard(|| {
        let d = deref(vol, "volume")?.0.dims();
        deref(out_dims, "out_dims")?;
        ptr::copy_nonoverlapping(d.as_ptr(), out_dims, 3);
        Ok(())
    })
}

/// Writes three spacings (mm) to `out_spacing`.
#[no_mangle]
pub unsafe extern "C" fn volaug_volume_spacing(vol: *const VolaugVolume, out_spacing: *mut f64) -> VolaugStatus {
    guard(|| {
        let s = deref(vol, "volume")?.0.spacing();
        deref(out_spacing, "out_spacing")?;
        ptr::copy_nonoverlapping(s.as_ptr(), out_spacing, 3);
        Ok(())
    })
}

/// Voxel count; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn volaug_volume_len(vol: *const VolaugVolume) -> usize {
    vol.as_ref().map_or(0, |v| v.0.len())
}

/// Borrowed view of the voxel data, valid while the handle lives.
#[no_mangle]
pub unsafe extern "C" fn volaug_volume_data(vol: *const VolaugVolume) -> *const f32 {
    vol.as_ref().map_or(ptr::null(), |v| v.0.data().as_ptr())
}

/// CT scaling or MR percentile normalisation.
#[no_mangle]
pub unsafe extern "C" fn volaug_normalize(vol: *const VolaugVolume, modality: u32, out: *mut *mut VolaugVolume) -> VolaugStatus {
    guard(|| {
        let v = &deref(vol, "volume")?.0;
        let n = match modality_arg(modality)? {
            Modality::Ct => normalize_ct(v),
            Modality::Mr => normalize_mr(v)?,
        };
        put(out, VolaugVolume(n))
    })
}

/// Clip to the modality's matching range.
#[no_mangle]
pub unsafe extern "C" fn volaug_preclip(vol: *const VolaugVolume, modality: u32, out: *mut *mut VolaugVolume) -> VolaugStatus {
    guard(|| {
        let v = &deref(vol, "volume")?.0;
        let c = match modality_arg(modality)? {
            Modality::Ct => preclip_ct(v),
            Modality::Mr => preclip_mr(v)?,
        };
        put(out, VolaugVolume(c))
    })
}

// ---- labels ----

#[no_mangle]
pub unsafe extern "C" fn volaug_labels_new(
    dims: *const usize,
    spacing: *const f64,
    data: *const u16,
    len: usize,
    out: *mut *mut VolaugLabels,
) -> VolaugStatus {
    guard(|| {
        let dims = triple(dims, "dims")?;
        let spacing = triple(spacing, "spacing")?;
        let data = slice_arg(data, len, "data")?.to_vec();
        put(out, VolaugLabels(LabelMap::new(dims, spacing, data)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn volaug_labels_load(path: *const c_char, out: *mut *mut VolaugLabels) -> VolaugStatus {
    guard(|| put(out, VolaugLabels(load_labels(path_arg(path)?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn volaug_labels_save(labels: *const VolaugLabels, path: *const c_char) -> VolaugStatus {
    guard(|| Ok(save_labels(&deref(labels, "labels")?.0, path_arg(path)?)?))
}

#[no_mangle]
pub unsafe extern "C" fn volaug_labels_free(labels: *mut VolaugLabels) {
    if !labels.is_null() {
        drop(Box::from_raw(labels));
    }
}

#[no_mangle]
pub unsafe extern "C" fn volaug_labels_dims(labels: *const VolaugLabels, out_dims: *mut usize) -> VolaugStatus {
    guard(|| {
        let d = deref(labels, "labels")?.0.dims();
        deref(out_dims, "out_dims")?;
        ptr::copy_nonoverlapping(d.as_ptr(), out_dims, 3);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn volaug_labels_len(labels: *const VolaugLabels) -> usize {
    labels.as_ref().map_or(0, |l| l.0.len())
}

/// Borrowed view of the label data, valid while the handle lives.
#[no_mangle]
pub unsafe extern "C" fn volaug_labels_data(labels: *const VolaugLabels) -> *const u16 {
    labels.as_ref().map_or(ptr::null(), |l| l.0.labels().as_ptr())
}

// ---- pipeline ----

/// Augments one pair with the generator for sample `sample` of `seed`; the
/// same pair the CLI writes as sample `sample`.
#[no_mangle]
pub unsafe extern "C" fn volaug_augment(
    image: *const VolaugVolume,
    labels: *const VolaugLabels,
    config_toml: *const c_char,
    seed: u64,
    sample: u64,
    out_image: *mut *mut VolaugVolume,
    out_labels: *mut *mut VolaugLabels,
) -> VolaugStatus {
    guard(|| {
        let img = &deref(image, "image")?.0;
        let lab = &deref(labels, "labels")?.0;
        if out_image.is_null() || out_labels.is_null() {
            return Err(null("output pointer"));
        }
        let cfg = config_arg(config_toml)?;
        let (a, b) = augment_sample(img, lab, &mut rng::stream(seed, sample), &cfg.augment())?;
        put(out_image, VolaugVolume(a))?;
        put(out_labels, VolaugLabels(b))
    })
}

/// Averages the cumulative histograms of `n` volumes. Inputs are used as
/// given; clip them with [`volaug_preclip`] first to match the CLI.
#[no_mangle]
pub unsafe extern "C" fn volaug_fit_hist(
    volumes: *const *const VolaugVolume,
    n: usize,
    config_toml: *const c_char,
    out: *mut *mut VolaugHistogram,
) -> VolaugStatus {
    guard(|| {
        let handles = slice_arg(volumes, n, "volumes")?;
        let vols = handles
            .iter()
            .map(|&h| deref(h, "volume").map(|v| v.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = config_arg(config_toml)?;
        put(out, VolaugHistogram(fit_source_histogram(&vols, &cfg.sm())?))
    })
}

/// Maps `vol` onto the histogram, using the histogram's own settings.
#[no_mangle]
pub unsafe extern "C" fn volaug_apply_sm(
    vol: *const VolaugVolume,
    hist: *const VolaugHistogram,
    out: *mut *mut VolaugVolume,
) -> VolaugStatus {
    guard(|| {
        let h = &deref(hist, "histogram")?.0;
        put(out, VolaugVolume(apply_sm(&deref(vol, "volume")?.0, h, &h.config())?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn volaug_hist_load(path: *const c_char, out: *mut *mut VolaugHistogram) -> VolaugStatus {
    guard(|| put(out, VolaugHistogram(IntensityHistogram::load(&path_arg(path)?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn volaug_hist_save(hist: *const VolaugHistogram, path: *const c_char) -> VolaugStatus {
    guard(|| Ok(deref(hist, "histogram")?.0.save(&path_arg(path)?)?))
}

/// Histogram file contents as a new string.
#[no_mangle]
pub unsafe extern "C" fn volaug_hist_to_json(hist: *const VolaugHistogram, out_json: *mut *mut c_char) -> VolaugStatus {
    guard(|| {
        let h = &deref(hist, "histogram")?.0;
        put_string(out_json, h.to_json()?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn volaug_hist_free(hist: *mut VolaugHistogram) {
    if !hist.is_null() {
        drop(Box::from_raw(hist));
    }
}

/// Metric report JSON, identical to the CLI's `evaluate` output.
#[no_mangle]
pub unsafe extern "C" fn volaug_evaluate(
    pred: *const VolaugLabels,
    gt: *const VolaugLabels,
    out_json: *mut *mut c_char,
) -> VolaugStatus {
    guard(|| {
        let report = evaluate(&deref(pred, "pred")?.0, &deref(gt, "gt")?.0)?;
        put_string(out_json, report.to_json()?)
    })
}
