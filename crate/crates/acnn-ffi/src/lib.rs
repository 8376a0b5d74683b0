//! C ABI over the classifier: opaque handles, integer status codes, and a
//! thread-local error message. Every function is panic-safe; no Rust type
//! crosses the boundary.
//!
//! Conventions:
//! - Functions return [`AcnnStatus`]; `ACNN_STATUS_OK` is 0. On any other
//!   status, `acnn_last_error()` describes the failure. The message pointer
//!   stays valid until the same thread calls into the library again.
//! - Out-parameters are written only on success.
//! - Buffers returned through out-parameters belong to the caller and must be
//!   released with `acnn_buffer_free`; handles with their `_free` function.
//!   Passing NULL to a `_free` function is a no-op.
//! - Feature matrices are row-major `rows x cols` doubles: one row per mel
//!   band, one column per frame.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use acnn_core::dsp::{Frontend, FrontendConfig};
use acnn_core::model::{load_checkpoint, predict, HyperParams, ModelParams};
use acnn_core::numeric::Tensor2;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcnnStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// An argument failed validation (bad UTF-8, bad config, bad shape).
    InvalidArgument = 2,
    /// The filesystem said no.
    Io = 3,
    /// A file exists but is not in the expected format.
    BadFormat = 4,
    /// A bug: unexpected internal failure, details in `acnn_last_error`.
    Internal = 5,
}

/// Opaque logMel feature extractor.
pub struct AcnnFrontend {
    frontend: Frontend,
    config: FrontendConfig,
}

/// Opaque trained classifier loaded from a checkpoint.
pub struct AcnnModel {
    params: ModelParams,
    hp: HyperParams,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let sanitized = CString::new(msg)
        .unwrap_or_else(|_| CString::new("error message contained NUL").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = sanitized);
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::default());
}

/// Human-readable description of the most recent failure on this thread, or
/// an empty string. Valid until this thread's next call into the library.
#[no_mangle]
pub extern "C" fn acnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn acnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Catches panics and turns the closure's result into a status code.
fn guarded(f: impl FnOnce() -> Result<(), (AcnnStatus, String)>) -> AcnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            AcnnStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            AcnnStatus::Internal
        }
    }
}

fn invalid(msg: impl Into<String>) -> (AcnnStatus, String) {
    (AcnnStatus::InvalidArgument, msg.into())
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string.
unsafe fn required_str<'a>(
    ptr: *const c_char,
    what: &str,
) -> Result<&'a str, (AcnnStatus, String)> {
    if ptr.is_null() {
        return Err((AcnnStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

fn required_out<T>(ptr: *mut T, what: &str) -> Result<(), (AcnnStatus, String)> {
    if ptr.is_null() {
        Err((AcnnStatus::NullArgument, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

fn dsp_status(e: &acnn_core::dsp::DspError) -> AcnnStatus {
    use acnn_core::dsp::DspError;
    match e {
        DspError::Io(_) => AcnnStatus::Io,
        DspError::Wav(_) | DspError::UnsupportedWav { .. } | DspError::BadCache { .. } => {
            AcnnStatus::BadFormat
        }
        _ => AcnnStatus::InvalidArgument,
    }
}

fn model_status(e: &acnn_core::model::ModelError) -> AcnnStatus {
    use acnn_core::model::ModelError;
    match e {
        ModelError::Io(_) => AcnnStatus::Io,
        ModelError::Checkpoint { .. } => AcnnStatus::BadFormat,
        _ => AcnnStatus::InvalidArgument,
    }
}

/// Creates a feature extractor. `config_json` may be NULL for the built-in
/// configuration (26 mel bands, 25 ms frames, 10 ms shift, 7.5 s at 16 kHz);
/// otherwise it is a JSON object overriding any subset of the configuration
/// fields.
///
/// # Safety
/// `config_json` must be NULL or a valid NUL-terminated string, and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acnn_frontend_new(
    config_json: *const c_char,
    out: *mut *mut AcnnFrontend,
) -> AcnnStatus {
    guarded(|| {
        required_out(out, "out")?;
        let config: FrontendConfig = if config_json.is_null() {
            FrontendConfig::default()
        } else {
            let text = required_str(config_json, "config_json")?;
            serde_json::from_str(text).map_err(|e| invalid(format!("bad config JSON: {e}")))?
        };
        let frontend = Frontend::new(config.clone())
            .map_err(|e| (dsp_status(&e), format!("bad frontend config: {e}")))?;
        let handle = Box::new(AcnnFrontend { frontend, config });
        out.write(Box::into_raw(handle));
        Ok(())
    })
}

/// Releases a frontend handle.
///
/// # Safety
/// `frontend` must be NULL or a pointer from `acnn_frontend_new` that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn acnn_frontend_free(frontend: *mut AcnnFrontend) {
    if !frontend.is_null() {
        drop(Box::from_raw(frontend));
    }
}

/// Number of mel bands (feature rows) this frontend produces.
///
/// # Safety
/// `frontend` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn acnn_frontend_n_mels(frontend: *const AcnnFrontend) -> usize {
    if frontend.is_null() {
        return 0;
    }
    (*frontend).config.n_mels
}

/// Number of frames (feature columns) this frontend produces; input audio is
/// padded or truncated to exactly this length.
///
/// # Safety
/// `frontend` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn acnn_frontend_total_frames(frontend: *const AcnnFrontend) -> usize {
    if frontend.is_null() {
        return 0;
    }
    (*frontend).config.total_frames()
}

/// Reads a WAV file and writes its logMel features as a freshly allocated
/// row-major `*out_rows x *out_cols` buffer into `*out_data`. Release with
/// `acnn_buffer_free(*out_data, *out_rows * *out_cols)`.
///
/// # Safety
/// `frontend` must be a valid handle, `wav_path` a valid NUL-terminated
/// string, and the three out-pointers valid.
#[no_mangle]
pub unsafe extern "C" fn acnn_frontend_features_from_wav(
    frontend: *const AcnnFrontend,
    wav_path: *const c_char,
    out_data: *mut *mut f64,
    out_rows: *mut usize,
    out_cols: *mut usize,
) -> AcnnStatus {
    guarded(|| {
        if frontend.is_null() {
            return Err((AcnnStatus::NullArgument, "frontend is NULL".into()));
        }
        let path = required_str(wav_path, "wav_path")?;
        required_out(out_data, "out_data")?;
        required_out(out_rows, "out_rows")?;
        required_out(out_cols, "out_cols")?;

        let fe = &*frontend;
        let clip = acnn_core::dsp::read_wav(Path::new(path))
            .map_err(|e| (dsp_status(&e), format!("{path}: {e}")))?;
        let features = fe
            .frontend
            .logmel(&clip)
            .map_err(|e| (dsp_status(&e), format!("{path}: {e}")))?;

        let rows = features.values.rows();
        let cols = features.values.cols();
        out_data.write(give_buffer(features.values.as_slice().to_vec()));
        out_rows.write(rows);
        out_cols.write(cols);
        Ok(())
    })
}

/// Releases a buffer returned by this library. `len` must be the element
/// count the producing call reported.
///
/// # Safety
/// `ptr` must be NULL or an unreleased buffer of exactly `len` elements
/// returned by this library.
#[no_mangle]
pub unsafe extern "C" fn acnn_buffer_free(ptr: *mut f64, len: usize) {
    if !ptr.is_null() {
        drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(ptr, len)));
    }
}

fn give_buffer(v: Vec<f64>) -> *mut f64 {
    Box::into_raw(v.into_boxed_slice()) as *mut f64
}

/// Loads a trained model from a checkpoint file.
///
/// # Safety
/// `checkpoint_path` must be a valid NUL-terminated string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn acnn_model_load(
    checkpoint_path: *const c_char,
    out: *mut *mut AcnnModel,
) -> AcnnStatus {
    guarded(|| {
        let path = required_str(checkpoint_path, "checkpoint_path")?;
        required_out(out, "out")?;
        let (params, hp) = load_checkpoint(Path::new(path))
            .map_err(|e| (model_status(&e), format!("{path}: {e}")))?;
        out.write(Box::into_raw(Box::new(AcnnModel { params, hp })));
        Ok(())
    })
}

/// Releases a model handle.
///
/// # Safety
/// `model` must be NULL or a pointer from `acnn_model_load` that has not been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn acnn_model_free(model: *mut AcnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of mel bands (feature rows) the model expects.
///
/// # Safety
/// `model` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn acnn_model_n_mels(model: *const AcnnModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).params.kernels.first().map_or(0, |k| k.rows())
}

unsafe fn features_tensor(
    features: *const f64,
    rows: usize,
    cols: usize,
) -> Result<Tensor2, (AcnnStatus, String)> {
    if features.is_null() {
        return Err((AcnnStatus::NullArgument, "features is NULL".into()));
    }
    if rows == 0 || cols == 0 {
        return Err(invalid(format!("features shape {rows}x{cols} is empty")));
    }
    let data = std::slice::from_raw_parts(features, rows * cols).to_vec();
    Tensor2::from_vec(rows, cols, data).map_err(|e| invalid(e.to_string()))
}

/// Classifies one utterance. `features` is a row-major `rows x cols` logMel
/// matrix. Writes the class posteriors to `probs_out[0..2]` and the argmax
/// class (0 or 1) to `class_out`.
///
/// # Safety
/// `model` must be a valid handle, `features` must point to `rows * cols`
/// doubles, `probs_out` to two doubles, and `class_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn acnn_model_predict(
    model: *const AcnnModel,
    features: *const f64,
    rows: usize,
    cols: usize,
    probs_out: *mut f64,
    class_out: *mut usize,
) -> AcnnStatus {
    guarded(|| {
        if model.is_null() {
            return Err((AcnnStatus::NullArgument, "model is NULL".into()));
        }
        required_out(probs_out, "probs_out")?;
        required_out(class_out, "class_out")?;
        let m = &*model;
        let x = features_tensor(features, rows, cols)?;
        let p = predict(&x, &m.params, &m.hp).map_err(|e| invalid(e.to_string()))?;
        std::slice::from_raw_parts_mut(probs_out, 2).copy_from_slice(&p.probabilities);
        class_out.write(p.class);
        Ok(())
    })
}

/// Computes the attention weights the model assigns across pooled time steps
/// of one utterance. Writes a freshly allocated buffer of `*alpha_len`
/// weights summing to 1 into `*alpha_out`; release with
/// `acnn_buffer_free(*alpha_out, *alpha_len)`.
///
/// # Safety
/// `model` must be a valid handle, `features` must point to `rows * cols`
/// doubles, and the out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn acnn_model_attention(
    model: *const AcnnModel,
    features: *const f64,
    rows: usize,
    cols: usize,
    alpha_out: *mut *mut f64,
    alpha_len: *mut usize,
) -> AcnnStatus {
    guarded(|| {
        if model.is_null() {
            return Err((AcnnStatus::NullArgument, "model is NULL".into()));
        }
        required_out(alpha_out, "alpha_out")?;
        required_out(alpha_len, "alpha_len")?;
        let m = &*model;
        let x = features_tensor(features, rows, cols)?;
        let p = predict(&x, &m.params, &m.hp).map_err(|e| invalid(e.to_string()))?;
        alpha_len.write(p.alpha.len());
        alpha_out.write(give_buffer(p.alpha));
        Ok(())
    })
}
