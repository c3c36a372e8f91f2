//! C ABI for loadcast model inference.
//!
//! The surface is deliberately small: load a trained model document from
//! disk, ask it about its input layout, push raw feature windows through the
//! embedded feature pipeline to get peak forecasts in amperes, and compute
//! the headline accuracy metric. Handles are opaque; every function returns
//! an [`LcStatus`] code and leaves a human-readable explanation for the most
//! recent failure in thread-local storage (see [`lc_last_error_message`]).
//!
//! Contract for callers:
//! - Pointers must be valid for the stated lengths; strings are NUL-terminated
//!   UTF-8.
//! - A handle produced by [`lc_model_load`] must be released exactly once with
//!   [`lc_model_free`] and not used afterwards.
//! - The buffer returned by [`lc_last_error_message`] is owned by the library
//!   and only valid on the calling thread until its next loadcast call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use loadcast::document::ModelDocument;
use loadcast::eval::mape;
use loadcast::Error;

/// Result code of every fallible call. Anything other than `Ok` leaves a
/// message retrievable through [`lc_last_error_message`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LcStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The file could not be read.
    Io = 3,
    /// The file was read but is not a valid model document.
    Parse = 4,
    /// An array argument had the wrong dimensions for this model.
    Shape = 5,
    /// An argument value was outside the valid domain.
    Domain = 6,
    /// A text output buffer was too small for the value plus its NUL.
    BufferTooSmall = 7,
    /// An unexpected internal failure; the message has details.
    Internal = 8,
}

/// Opaque handle to a loaded model document (trained estimator plus its
/// fitted feature pipeline).
pub struct LcModel {
    doc: ModelDocument,
}

/// Shape summary of a loaded model, filled in by [`lc_model_info`].
#[repr(C)]
pub struct LcModelInfo {
    /// Years per input window.
    pub n_steps: usize,
    /// Values per raw (pre-pipeline) step row.
    pub raw_width: usize,
    /// Values per engineered step row after normalization and component
    /// reduction.
    pub engineered_width: usize,
    /// Total trainable parameter count of the estimator.
    pub parameter_count: usize,
    /// 1 for a recurrent sequence model, 0 for a feed-forward baseline.
    pub sequence_model: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let owned = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").expect("static message"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
}

fn status_of(err: &Error) -> LcStatus {
    match err {
        Error::Io { .. } => LcStatus::Io,
        Error::Parse { .. } => LcStatus::Parse,
        Error::Shape(_) => LcStatus::Shape,
        Error::Domain(_) | Error::Consistency(_) => LcStatus::Domain,
        _ => LcStatus::Internal,
    }
}

fn fail(err: &Error) -> LcStatus {
    set_last_error(&err.to_string());
    status_of(err)
}

fn fail_with(status: LcStatus, message: &str) -> LcStatus {
    set_last_error(message);
    status
}

/// Runs `body` shielded from panics so no unwind crosses the C boundary.
fn guarded(body: impl FnOnce() -> LcStatus) -> LcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let detail = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            fail_with(LcStatus::Internal, &format!("internal panic: {detail}"))
        }
    }
}

/// Copies `value` into `buf` as a NUL-terminated C string.
fn write_c_string(value: &str, buf: *mut c_char, cap: usize) -> LcStatus {
    if buf.is_null() {
        return fail_with(LcStatus::NullArgument, "output buffer is null");
    }
    let bytes = value.as_bytes();
    if cap < bytes.len() + 1 {
        return fail_with(
            LcStatus::BufferTooSmall,
            &format!("needs {} bytes, buffer holds {cap}", bytes.len() + 1),
        );
    }
    unsafe {
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
        *buf.add(bytes.len()) = 0;
    }
    LcStatus::Ok
}

/// Message describing the most recent failure on this thread, or an empty
/// string when nothing failed yet. The pointer stays valid until this
/// thread's next loadcast call.
#[no_mangle]
pub extern "C" fn lc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model document from `path` (NUL-terminated UTF-8) and stores the
/// new handle in `*out`. On any failure `*out` is left untouched.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn lc_model_load(path: *const c_char, out: *mut *mut LcModel) -> LcStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail_with(LcStatus::NullArgument, "path and out must be non-null");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => s,
            Err(_) => return fail_with(LcStatus::InvalidUtf8, "path is not valid UTF-8"),
        };
        match ModelDocument::load(Path::new(path)) {
            Ok(doc) => {
                let handle = Box::new(LcModel { doc });
                unsafe { *out = Box::into_raw(handle) };
                LcStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Releases a handle from [`lc_model_load`]. Passing null is a no-op.
///
/// # Safety
/// `model` must be a pointer previously returned by [`lc_model_load`] that
/// has not been freed, or null.
#[no_mangle]
pub unsafe extern "C" fn lc_model_free(model: *mut LcModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Fills `*info` with the model's shape summary.
///
/// # Safety
/// `model` must be a live handle and `info` writable storage for one
/// [`LcModelInfo`].
#[no_mangle]
pub unsafe extern "C" fn lc_model_info(model: *const LcModel, info: *mut LcModelInfo) -> LcStatus {
    guarded(|| {
        let Some(handle) = (unsafe { model.as_ref() }) else {
            return fail_with(LcStatus::NullArgument, "model handle is null");
        };
        if info.is_null() {
            return fail_with(LcStatus::NullArgument, "info output is null");
        }
        let pipeline = &handle.doc.pipeline;
        let sequence_model = match handle.doc.model {
            loadcast::document::ModelSpec::Sequence(_) => 1,
            loadcast::document::ModelSpec::FeedForward(_) => 0,
        };
        unsafe {
            *info = LcModelInfo {
                n_steps: pipeline.n_steps,
                raw_width: pipeline.raw_schema.width(),
                engineered_width: pipeline.engineered_width(),
                parameter_count: handle.doc.model.parameter_count(),
                sequence_model,
            };
        }
        LcStatus::Ok
    })
}

/// Writes the model's label (for example `gru-many-to-one`) into `buf`.
///
/// # Safety
/// `model` must be a live handle and `buf` writable for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn lc_model_label(
    model: *const LcModel,
    buf: *mut c_char,
    cap: usize,
) -> LcStatus {
    guarded(|| {
        let Some(handle) = (unsafe { model.as_ref() }) else {
            return fail_with(LcStatus::NullArgument, "model handle is null");
        };
        write_c_string(&handle.doc.model.label(), buf, cap)
    })
}

/// Writes the name of raw input column `index` into `buf`. Iterating from 0
/// to `raw_width - 1` (see [`lc_model_info`]) yields the exact value order
/// expected in each row passed to [`lc_predict`].
///
/// # Safety
/// `model` must be a live handle and `buf` writable for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn lc_model_column_name(
    model: *const LcModel,
    index: usize,
    buf: *mut c_char,
    cap: usize,
) -> LcStatus {
    guarded(|| {
        let Some(handle) = (unsafe { model.as_ref() }) else {
            return fail_with(LcStatus::NullArgument, "model handle is null");
        };
        let names = handle.doc.pipeline.raw_schema.column_names();
        match names.get(index) {
            Some(name) => write_c_string(name, buf, cap),
            None => fail_with(
                LcStatus::Domain,
                &format!("column index {index} outside 0..{}", names.len()),
            ),
        }
    })
}

/// Predicts the next-year peak (amperes) from one raw feature window.
///
/// `raw_steps` is a row-major `n_steps x raw_width` matrix: one row per
/// input year, oldest first, each row in the column order reported by
/// [`lc_model_column_name`]. Both dimensions must match the loaded model;
/// the embedded pipeline handles normalization and component reduction.
///
/// # Safety
/// `model` must be a live handle, `raw_steps` readable for
/// `n_steps * raw_width` doubles, and `out_amperes` writable for one double.
#[no_mangle]
pub unsafe extern "C" fn lc_predict(
    model: *const LcModel,
    raw_steps: *const f64,
    n_steps: usize,
    raw_width: usize,
    out_amperes: *mut f64,
) -> LcStatus {
    guarded(|| {
        let Some(handle) = (unsafe { model.as_ref() }) else {
            return fail_with(LcStatus::NullArgument, "model handle is null");
        };
        if raw_steps.is_null() || out_amperes.is_null() {
            return fail_with(LcStatus::NullArgument, "raw_steps and out_amperes must be non-null");
        }
        let pipeline = &handle.doc.pipeline;
        if n_steps != pipeline.n_steps || raw_width != pipeline.raw_schema.width() {
            return fail_with(
                LcStatus::Shape,
                &format!(
                    "window is {n_steps}x{raw_width}, model expects {}x{}",
                    pipeline.n_steps,
                    pipeline.raw_schema.width()
                ),
            );
        }
        let flat = unsafe { std::slice::from_raw_parts(raw_steps, n_steps * raw_width) };
        if flat.iter().any(|v| !v.is_finite()) {
            return fail_with(LcStatus::Domain, "raw feature window contains non-finite values");
        }
        let mut engineered = Vec::with_capacity(n_steps);
        for row in flat.chunks(raw_width) {
            match pipeline.transform_step(row) {
                Ok(step) => engineered.push(step),
                Err(e) => return fail(&e),
            }
        }
        match handle.doc.model.predict_window(&engineered) {
            Ok(normalized) => {
                let amperes = pipeline.denormalize_peak(normalized);
                if !amperes.is_finite() {
                    return fail_with(
                        LcStatus::Internal,
                        &format!("prediction is non-finite ({amperes})"),
                    );
                }
                unsafe { *out_amperes = amperes };
                LcStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Mean absolute percentage error of `forecasts` against `actuals`, in
/// percent. Actuals must be strictly positive and everything finite.
///
/// # Safety
/// `actuals` and `forecasts` must be readable for `len` doubles and
/// `out_mape` writable for one double.
#[no_mangle]
pub unsafe extern "C" fn lc_mape(
    actuals: *const f64,
    forecasts: *const f64,
    len: usize,
    out_mape: *mut f64,
) -> LcStatus {
    guarded(|| {
        if actuals.is_null() || forecasts.is_null() || out_mape.is_null() {
            return fail_with(LcStatus::NullArgument, "all arguments must be non-null");
        }
        let a = unsafe { std::slice::from_raw_parts(actuals, len) };
        let f = unsafe { std::slice::from_raw_parts(forecasts, len) };
        match mape(a, f) {
            Ok(value) => {
                unsafe { *out_mape = value };
                LcStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_nul_terminated_package_version() {
        let v = unsafe { CStr::from_ptr(lc_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn error_message_starts_empty_then_reports() {
        let before = unsafe { CStr::from_ptr(lc_last_error_message()) };
        assert_eq!(before.to_str().unwrap(), "");
        let status = unsafe { lc_model_load(std::ptr::null(), std::ptr::null_mut()) };
        assert_eq!(status, LcStatus::NullArgument);
        let after = unsafe { CStr::from_ptr(lc_last_error_message()) };
        assert!(!after.to_str().unwrap().is_empty());
    }

    #[test]
    fn string_copy_reports_required_size() {
        let mut buf = [0 as c_char; 4];
        assert_eq!(write_c_string("abc", buf.as_mut_ptr(), 4), LcStatus::Ok);
        assert_eq!(write_c_string("abcd", buf.as_mut_ptr(), 4), LcStatus::BufferTooSmall);
        let msg = unsafe { CStr::from_ptr(lc_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("5 bytes"));
    }

    #[test]
    fn free_of_null_is_noop() {
        unsafe { lc_model_free(std::ptr::null_mut()) };
    }

    #[test]
    fn mape_matches_library_values() {
        let actuals = [550.0, 521.0];
        let forecasts = [539.0, 547.0];
        let mut out = 0.0;
        let status = unsafe { lc_mape(actuals.as_ptr(), forecasts.as_ptr(), 2, &mut out) };
        assert_eq!(status, LcStatus::Ok);
        assert!((out - 3.4952).abs() < 5e-5);

        let bad = [0.0];
        let status = unsafe { lc_mape(bad.as_ptr(), forecasts.as_ptr(), 1, &mut out) };
        assert_eq!(status, LcStatus::Domain);
    }
}
