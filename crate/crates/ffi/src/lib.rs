//! C ABI surface: opaque model handles, integer error codes, and a
//! thread-local last-error message. All pointers are borrowed unless the
//! function name says otherwise; handles must be released with
//! `advnids_model_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::{Array1, Array2};

use advnids::attack::{AttackConfig, ClipBox, FgsmConfig, PgdConfig};
use advnids::error::Error;
use advnids::eval::Classifier;
use advnids::model_io;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvnidsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    DataError = 4,
    NumericalError = 5,
    InternalError = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_for(err: &Error) -> AdvnidsStatus {
    match err.exit_code() {
        3 => AdvnidsStatus::ConfigError,
        4 => AdvnidsStatus::DataError,
        5 => AdvnidsStatus::NumericalError,
        _ => AdvnidsStatus::InternalError,
    }
}

/// Opaque handle around a loaded model and its inference context.
pub struct AdvnidsModel {
    classifier: Classifier,
    input_dim: usize,
    clip: Option<ClipBox>,
}

/// Copy the last error message for this thread into `buf` (NUL
/// terminated, truncated to `len` bytes). Returns the full message length
/// in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn advnids_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn advnids_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load a model file written by the `advnids` CLI. On success writes the
/// new handle through `out` and returns `Ok`; the handle must be released
/// with `advnids_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn advnids_model_load(
    path: *const c_char,
    out: *mut *mut AdvnidsModel,
) -> AdvnidsStatus {
    if path.is_null() || out.is_null() {
        set_error("null argument");
        return AdvnidsStatus::NullArgument;
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        set_error("path is not valid UTF-8");
        return AdvnidsStatus::InvalidUtf8;
    };
    let result = catch_unwind(AssertUnwindSafe(|| model_io::load_model(path)));
    match result {
        Ok(Ok(loaded)) => {
            let classifier = if loaded.defended.provenance.applied.is_empty()
                && loaded.defended.gda.is_none()
                && loaded.defended.hc.is_none()
            {
                Classifier::Plain(loaded.model.clone())
            } else {
                Classifier::Defended(loaded.defended.clone())
            };
            let handle = Box::new(AdvnidsModel {
                input_dim: loaded.model.input_dim(),
                clip: loaded.clip_box.clone(),
                classifier,
            });
            *out = Box::into_raw(handle);
            AdvnidsStatus::Ok
        }
        Ok(Err(err)) => {
            set_error(err.to_string());
            status_for(&err)
        }
        Err(_) => {
            set_error("panic while loading model");
            AdvnidsStatus::InternalError
        }
    }
}

/// Release a handle returned by `advnids_model_load`. Null is a no-op.
///
/// # Safety
/// `model` must be a handle from this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn advnids_model_free(model: *mut AdvnidsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input features the model expects.
///
/// # Safety
/// `model` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn advnids_model_input_dim(model: *const AdvnidsModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).input_dim
}

unsafe fn features_matrix(
    features: *const f64,
    n_rows: usize,
    n_cols: usize,
    expected_cols: usize,
) -> Result<Array2<f64>, (AdvnidsStatus, String)> {
    if features.is_null() {
        return Err((AdvnidsStatus::NullArgument, "null feature pointer".into()));
    }
    if n_rows == 0 || n_cols != expected_cols {
        return Err((
            AdvnidsStatus::DataError,
            format!("expected {expected_cols} columns and at least one row, got {n_rows}x{n_cols}"),
        ));
    }
    let data = std::slice::from_raw_parts(features, n_rows * n_cols).to_vec();
    Array2::from_shape_vec((n_rows, n_cols), data)
        .map_err(|e| (AdvnidsStatus::DataError, e.to_string()))
}

/// Score `n_rows` row-major feature vectors through the full prediction
/// path. Writes attack probabilities to `out_scores` and 0/1 labels to
/// `out_labels`; either output may be null to skip it.
///
/// # Safety
/// `features` must hold `n_rows * n_cols` doubles; non-null outputs must
/// hold `n_rows` elements.
#[no_mangle]
pub unsafe extern "C" fn advnids_predict(
    model: *const AdvnidsModel,
    features: *const f64,
    n_rows: usize,
    n_cols: usize,
    out_scores: *mut f64,
    out_labels: *mut u8,
) -> AdvnidsStatus {
    if model.is_null() {
        set_error("null model handle");
        return AdvnidsStatus::NullArgument;
    }
    let model = &*model;
    let x = match features_matrix(features, n_rows, n_cols, model.input_dim) {
        Ok(x) => x,
        Err((status, msg)) => {
            set_error(msg);
            return status;
        }
    };
    let result = catch_unwind(AssertUnwindSafe(|| model.classifier.score(&x.view(), 0)));
    match result {
        Ok(Ok((scores, labels))) => {
            if !out_scores.is_null() {
                ptr::copy_nonoverlapping(scores.as_ptr(), out_scores, n_rows);
            }
            if !out_labels.is_null() {
                ptr::copy_nonoverlapping(labels.as_ptr(), out_labels, n_rows);
            }
            AdvnidsStatus::Ok
        }
        Ok(Err(err)) => {
            set_error(err.to_string());
            status_for(&err)
        }
        Err(_) => {
            set_error("panic during prediction");
            AdvnidsStatus::InternalError
        }
    }
}

unsafe fn run_attack(
    model: &AdvnidsModel,
    attack: AttackConfig,
    features: *const f64,
    labels: *const u8,
    n_rows: usize,
    n_cols: usize,
    out_adversarial: *mut f64,
    out_success: *mut u8,
) -> AdvnidsStatus {
    let x = match features_matrix(features, n_rows, n_cols, model.input_dim) {
        Ok(x) => x,
        Err((status, msg)) => {
            set_error(msg);
            return status;
        }
    };
    if labels.is_null() || out_adversarial.is_null() {
        set_error("null labels or output pointer");
        return AdvnidsStatus::NullArgument;
    }
    let y = Array1::from_vec(std::slice::from_raw_parts(labels, n_rows).to_vec());
    let result = catch_unwind(AssertUnwindSafe(|| {
        attack.run(model.classifier.base(), &x.view(), &y.view())
    }));
    match result {
        Ok(Ok(batch)) => {
            let flat: Vec<f64> = batch.x_adv.iter().copied().collect();
            ptr::copy_nonoverlapping(flat.as_ptr(), out_adversarial, flat.len());
            if !out_success.is_null() {
                for (i, &s) in batch.success.iter().enumerate() {
                    *out_success.add(i) = s as u8;
                }
            }
            AdvnidsStatus::Ok
        }
        Ok(Err(err)) => {
            set_error(err.to_string());
            status_for(&err)
        }
        Err(_) => {
            set_error("panic during attack");
            AdvnidsStatus::InternalError
        }
    }
}

fn clip_for(model: &AdvnidsModel, n_cols: usize) -> ClipBox {
    model
        .clip
        .clone()
        .unwrap_or_else(|| ClipBox::global(f64::NEG_INFINITY, f64::INFINITY, n_cols).expect("valid box"))
}

/// One-step signed-gradient evasion against the loaded model. Writes the
/// perturbed rows (row-major, same shape as the input) to
/// `out_adversarial` and per-row success flags to `out_success` (may be
/// null).
///
/// # Safety
/// `features` must hold `n_rows * n_cols` doubles, `labels` and
/// `out_success` `n_rows` bytes, `out_adversarial` `n_rows * n_cols`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn advnids_attack_fgsm(
    model: *const AdvnidsModel,
    features: *const f64,
    labels: *const u8,
    n_rows: usize,
    n_cols: usize,
    eps: f64,
    out_adversarial: *mut f64,
    out_success: *mut u8,
) -> AdvnidsStatus {
    if model.is_null() {
        set_error("null model handle");
        return AdvnidsStatus::NullArgument;
    }
    let model = &*model;
    let attack = AttackConfig::Fgsm(FgsmConfig::new(eps, clip_for(model, n_cols)));
    run_attack(model, attack, features, labels, n_rows, n_cols, out_adversarial, out_success)
}

/// Iterated signed-gradient evasion (`max_iter` steps of `eps_step`,
/// projected back into the `eps` ball each step). Same memory contract as
/// `advnids_attack_fgsm`.
///
/// # Safety
/// See `advnids_attack_fgsm`.
#[no_mangle]
pub unsafe extern "C" fn advnids_attack_pgd(
    model: *const AdvnidsModel,
    features: *const f64,
    labels: *const u8,
    n_rows: usize,
    n_cols: usize,
    eps: f64,
    eps_step: f64,
    max_iter: usize,
    out_adversarial: *mut f64,
    out_success: *mut u8,
) -> AdvnidsStatus {
    if model.is_null() {
        set_error("null model handle");
        return AdvnidsStatus::NullArgument;
    }
    let model = &*model;
    let attack = AttackConfig::Pgd(PgdConfig::new(eps, eps_step, max_iter, clip_for(model, n_cols)));
    run_attack(model, attack, features, labels, n_rows, n_cols, out_adversarial, out_success)
}
