//! C ABI over `okid-core`.
//!
//! Every fallible call returns an [`OkidStatus`]. On failure the message is
//! available from [`okid_last_error`] on the same thread. Matrices cross the
//! boundary as row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use okid_core::analysis::frequency_response;
use okid_core::era::{identify, EraOptions, IdentifiedModel, OrderSelection, DEFAULT_THRESHOLD};
use okid_core::io::ModelJson;
use okid_core::okid::OkidConfig;
use okid_core::{Error, TimeSeriesDataset};

use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OkidStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Horizon = 4,
    Numerical = 5,
    Parse = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Which model matrix to copy out.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OkidMatrix {
    A = 0,
    B = 1,
    C = 2,
    D = 3,
    K = 4,
}

/// Opaque input/output record.
pub struct OkidDataset(TimeSeriesDataset);

/// Opaque identified model with observer gain.
pub struct OkidModel(IdentifiedModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> OkidStatus {
    match err.root() {
        Error::DimensionMismatch { .. } | Error::GridMismatch(_) => OkidStatus::DimensionMismatch,
        Error::Horizon { .. } | Error::InsufficientData { .. } | Error::InsufficientHorizon { .. } => OkidStatus::Horizon,
        Error::Unstable { .. }
        | Error::Order { .. }
        | Error::DegenerateRealization(_)
        | Error::SingularFrequency { .. } => OkidStatus::Numerical,
        Error::Parse { .. } | Error::Json { .. } => OkidStatus::Parse,
        _ => OkidStatus::InvalidArgument,
    }
}

fn guard<F>(f: F) -> OkidStatus
where
    F: FnOnce() -> Result<(), (OkidStatus, String)>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OkidStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            OkidStatus::Panic
        }
    }
}

fn core<T>(r: okid_core::Result<T>) -> Result<T, (OkidStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (OkidStatus, String) {
    (OkidStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (OkidStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `p` points to `len` readable doubles.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], (OkidStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `p` points to `len` writable doubles.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn okid_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn okid_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Build a dataset. `u` holds `inputs * len` samples, `y` holds
/// `outputs * len`; both row-major with one row per channel.
///
/// # Safety
/// `u` and `y` must point to buffers of the stated sizes; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn okid_dataset_new(
    u: *const f64,
    inputs: usize,
    y: *const f64,
    outputs: usize,
    len: usize,
    sample_rate: f64,
    out: *mut *mut OkidDataset,
) -> OkidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let total = |ch: usize| {
            ch.checked_mul(len)
                .ok_or((OkidStatus::InvalidArgument, "dataset size overflows".to_string()))
        };
        let us = unsafe { slice(u, total(inputs)?, "u") }?;
        let ys = unsafe { slice(y, total(outputs)?, "y") }?;
        let um = DMatrix::from_row_slice(inputs, len, us);
        let ym = DMatrix::from_row_slice(outputs, len, ys);
        let data = core(TimeSeriesDataset::new(um, ym, sample_rate))?;
        unsafe { *out = Box::into_raw(Box::new(OkidDataset(data))) };
        Ok(())
    })
}

/// # Safety
/// `data` must come from [`okid_dataset_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn okid_dataset_free(data: *mut OkidDataset) {
    if !data.is_null() {
        drop(unsafe { Box::from_raw(data) });
    }
}

/// Identify a model. `order = 0` selects by `threshold` (relative to the
/// largest Hankel singular value; non-positive means the default 1e-3).
///
/// # Safety
/// `data` must be a live dataset handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn okid_identify(
    data: *const OkidDataset,
    horizon: usize,
    order: usize,
    threshold: f64,
    out: *mut *mut OkidModel,
) -> OkidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let data = unsafe { data.as_ref() }.ok_or_else(|| null("data"))?;
        let selection = if order > 0 {
            OrderSelection::Order(order)
        } else if threshold > 0.0 {
            OrderSelection::Threshold(threshold)
        } else {
            OrderSelection::Threshold(DEFAULT_THRESHOLD)
        };
        let opts = EraOptions {
            selection,
            ..EraOptions::default()
        };
        let model = core(identify(&data.0, &OkidConfig::new(horizon), &opts))?;
        unsafe { *out = Box::into_raw(Box::new(OkidModel(model))) };
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn okid_model_free(model: *mut OkidModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// # Safety
/// All pointers must be valid; output pointers may not be NULL.
#[no_mangle]
pub unsafe extern "C" fn okid_model_dims(
    model: *const OkidModel,
    states: *mut usize,
    inputs: *mut usize,
    outputs: *mut usize,
) -> OkidStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if states.is_null() || inputs.is_null() || outputs.is_null() {
            return Err(null("dimension output"));
        }
        let sys = &m.0.model;
        unsafe {
            *states = sys.states();
            *inputs = sys.inputs();
            *outputs = sys.outputs();
        }
        Ok(())
    })
}

/// Copy one matrix row-major into `buf` (`capacity` doubles).
///
/// # Safety
/// `buf` must hold `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn okid_model_matrix(
    model: *const OkidModel,
    which: OkidMatrix,
    buf: *mut f64,
    capacity: usize,
) -> OkidStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let sys = &m.0.model;
        let mat = match which {
            OkidMatrix::A => sys.a(),
            OkidMatrix::B => sys.b(),
            OkidMatrix::C => sys.c(),
            OkidMatrix::D => sys.d(),
            OkidMatrix::K => &m.0.gain,
        };
        if capacity < mat.len() {
            return Err((
                OkidStatus::BufferTooSmall,
                format!("buffer holds {capacity} values, matrix needs {}", mat.len()),
            ));
        }
        let dst = unsafe { slice_mut(buf, mat.len(), "buf") }?;
        for (i, row) in mat.row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                dst[i * mat.ncols() + j] = *v;
            }
        }
        Ok(())
    })
}

/// Hankel singular values, descending. `count` receives the total; at most
/// `capacity` are written.
///
/// # Safety
/// `buf` must hold `capacity` doubles; `count` must be valid.
#[no_mangle]
pub unsafe extern "C" fn okid_model_singular_values(
    model: *const OkidModel,
    buf: *mut f64,
    capacity: usize,
    count: *mut usize,
) -> OkidStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if count.is_null() {
            return Err(null("count"));
        }
        let sv = &m.0.singular_values;
        unsafe { *count = sv.len() };
        let n = sv.len().min(capacity);
        unsafe { slice_mut(buf, n, "buf") }?.copy_from_slice(&sv[..n]);
        Ok(())
    })
}

/// Spectral radius of `A - K C`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn okid_model_observer_spectral_radius(model: *const OkidModel, out: *mut f64) -> OkidStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        unsafe { *out = m.0.observer_spectral_radius() };
        Ok(())
    })
}

/// Serialize to JSON. Release the string with [`okid_string_free`].
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn okid_model_to_json(model: *const OkidModel, out: *mut *mut c_char) -> OkidStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(&ModelJson::from_identified(&m.0))
            .map_err(|e| (OkidStatus::InvalidArgument, e.to_string()))?;
        let c = CString::new(text).map_err(|e| (OkidStatus::InvalidArgument, e.to_string()))?;
        unsafe { *out = c.into_raw() };
        Ok(())
    })
}

/// Parse a model JSON string (must carry `K`).
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn okid_model_from_json(json: *const c_char, out: *mut *mut OkidModel) -> OkidStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = unsafe { CStr::from_ptr(json) }
            .to_str()
            .map_err(|e| (OkidStatus::Parse, e.to_string()))?;
        let parsed: ModelJson = serde_json::from_str(text).map_err(|e| (OkidStatus::Parse, e.to_string()))?;
        let model = core(parsed.identified())?;
        unsafe { *out = Box::into_raw(Box::new(OkidModel(model))) };
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn okid_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Evaluate the model at `count` frequencies. `re` and `im` each receive
/// `count * outputs * inputs` values ordered by frequency, then output, then
/// input.
///
/// # Safety
/// Buffers must have the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn okid_frequency_response(
    model: *const OkidModel,
    frequencies: *const f64,
    count: usize,
    sample_rate: f64,
    re: *mut f64,
    im: *mut f64,
) -> OkidStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let freqs = unsafe { slice(frequencies, count, "frequencies") }?;
        let fr = core(frequency_response(&m.0.model, freqs, sample_rate))?;
        let per = m.0.model.outputs() * m.0.model.inputs();
        let re = unsafe { slice_mut(re, count * per, "re") }?;
        let im = unsafe { slice_mut(im, count * per, "im") }?;
        let mut at = 0;
        for h in fr.response() {
            for row in h.row_iter() {
                for v in row.iter() {
                    re[at] = v.re;
                    im[at] = v.im;
                    at += 1;
                }
            }
        }
        Ok(())
    })
}
