//! C ABI for the mbmf library.
//!
//! Conventions:
//!
//! * Every fallible function returns [`MbmfStatus`]; `MBMF_STATUS_OK` (0)
//!   means success. On failure a thread-local message is set and can be read
//!   with [`mbmf_last_error_message`] until the next failure on the same
//!   thread.
//! * Datasets and models are opaque handles created and destroyed by this
//!   library. Pass them back to exactly one matching `_free` call; handles
//!   are not reference counted.
//! * Out-parameters are written only on success.
//!
//! The matching header is generated into `include/mbmf.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mbmf::data::{Entry, SparseObservations};
use mbmf::magnitudes::{
    center_bounded, centered_range_magnitudes, nonneg_range_magnitudes, shift_nonnegative,
};
use mbmf::model::TrainedModel;
use mbmf::optimizer::{predict, train, TrainConfig};
use mbmf::spherical::MagnitudePair;
use mbmf::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbmfStatus {
    MbmfStatusOk = 0,
    /// A required pointer argument was null.
    MbmfStatusNullArgument = 1,
    /// A string argument was not valid UTF-8.
    MbmfStatusInvalidUtf8 = 2,
    /// File could not be read or written.
    MbmfStatusIo = 3,
    /// Input data or a model file failed to parse or validate.
    MbmfStatusParse = 4,
    /// Arguments violate a documented precondition.
    MbmfStatusInvalidArgument = 5,
    /// Training aborted on a non-finite or exploding objective.
    MbmfStatusDiverged = 6,
    /// A row or column index is out of range.
    MbmfStatusOutOfRange = 7,
    /// An unexpected internal failure; the process state is still sound.
    MbmfStatusInternal = 8,
}

/// Opaque sparse observation matrix.
pub struct MbmfDataset {
    inner: SparseObservations,
}

/// Opaque trained model (factors, magnitudes, preprocessing record, labels).
pub struct MbmfModel {
    inner: TrainedModel,
}

/// Training options; get defaults from [`mbmf_train_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MbmfTrainOptions {
    /// Latent dimension, at least 2.
    pub k: usize,
    pub max_iters: usize,
    /// Early-stop tolerance on the per-iteration objective decrease.
    pub tol: f64,
    /// Consecutive below-tolerance iterations before stopping.
    pub patience: usize,
    /// Initial step size for both angle matrices.
    pub learning_rate: f64,
    pub lr_grow: f64,
    pub lr_shrink: f64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<Vec<u8>>) {
    let message = CString::new(message).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
}

fn status_of(error: &Error) -> MbmfStatus {
    match error {
        Error::Io { .. } | Error::Csv(_) => MbmfStatus::MbmfStatusIo,
        Error::Diverged { .. } => MbmfStatus::MbmfStatusDiverged,
        Error::IndexOutOfRange(_) | Error::EntryOutOfBounds { .. } => {
            MbmfStatus::MbmfStatusOutOfRange
        }
        Error::MalformedLine { .. }
        | Error::DuplicateEntry { .. }
        | Error::DuplicatePair { .. }
        | Error::ModelFormat { .. }
        | Error::NoEntries => MbmfStatus::MbmfStatusParse,
        _ => MbmfStatus::MbmfStatusInvalidArgument,
    }
}

fn fail(error: Error) -> MbmfStatus {
    let status = status_of(&error);
    set_error(error.to_string());
    status
}

/// Runs a closure, translating panics into `MbmfStatusInternal`.
fn guarded(body: impl FnOnce() -> MbmfStatus) -> MbmfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic in mbmf");
            MbmfStatus::MbmfStatusInternal
        }
    }
}

macro_rules! nonnull {
    ($ptr:expr) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => {
                set_error(format!("null argument `{}`", stringify!($ptr)));
                return MbmfStatus::MbmfStatusNullArgument;
            }
        }
    };
}

unsafe fn path_arg(raw: *const c_char) -> Result<&'static Path, MbmfStatus> {
    if raw.is_null() {
        set_error("null path argument");
        return Err(MbmfStatus::MbmfStatusNullArgument);
    }
    match unsafe { CStr::from_ptr(raw) }.to_str() {
        Ok(text) => Ok(Path::new(text)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(MbmfStatus::MbmfStatusInvalidUtf8)
        }
    }
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn mbmf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Default training options for latent dimension `k`.
#[no_mangle]
pub extern "C" fn mbmf_train_options_default(k: usize) -> MbmfTrainOptions {
    let cfg = TrainConfig::new(k);
    MbmfTrainOptions {
        k,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        patience: cfg.patience,
        learning_rate: cfg.lr_phi,
        lr_grow: cfg.lr_grow,
        lr_shrink: cfg.lr_shrink,
        seed: cfg.seed,
    }
}

fn config_from(options: &MbmfTrainOptions) -> TrainConfig {
    TrainConfig {
        k: options.k,
        max_iters: options.max_iters,
        tol: options.tol,
        patience: options.patience,
        lr_phi: options.learning_rate,
        lr_theta: options.learning_rate,
        lr_grow: options.lr_grow,
        lr_shrink: options.lr_shrink,
        seed: options.seed,
        variant: mbmf::magnitudes::Variant::Nonnegative,
    }
}

/// Loads a delimiter-separated `user,item,value` file into a dataset.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn mbmf_dataset_load(
    path: *const c_char,
    delimiter: c_char,
    has_header: bool,
    out: *mut *mut MbmfDataset,
) -> MbmfStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return MbmfStatus::MbmfStatusNullArgument;
        }
        let path = match unsafe { path_arg(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        match mbmf::data::load_triplets(path, delimiter as u8 as char, has_header) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(MbmfDataset { inner })) };
                MbmfStatus::MbmfStatusOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Builds a dataset from parallel triplet arrays of length `len`. Row and
/// column labels are the decimal indices.
///
/// # Safety
/// `rows`, `cols` and `values` must point to `len` readable elements each;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbmf_dataset_from_triplets(
    n_rows: usize,
    n_cols: usize,
    rows: *const usize,
    cols: *const usize,
    values: *const f64,
    len: usize,
    out: *mut *mut MbmfDataset,
) -> MbmfStatus {
    guarded(|| {
        if out.is_null() || (len > 0 && (rows.is_null() || cols.is_null() || values.is_null())) {
            set_error("null array or out pointer");
            return MbmfStatus::MbmfStatusNullArgument;
        }
        let rows = unsafe { std::slice::from_raw_parts(rows, len) };
        let cols = unsafe { std::slice::from_raw_parts(cols, len) };
        let values = unsafe { std::slice::from_raw_parts(values, len) };
        let entries = rows
            .iter()
            .zip(cols)
            .zip(values)
            .map(|((&row, &col), &value)| Entry { row, col, value })
            .collect();
        match SparseObservations::from_entries(n_rows, n_cols, entries) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(MbmfDataset { inner })) };
                MbmfStatus::MbmfStatusOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `dataset` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mbmf_dataset_rows(dataset: *const MbmfDataset) -> usize {
    unsafe { dataset.as_ref() }.map_or(0, |d| d.inner.n_rows())
}

/// # Safety
/// `dataset` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mbmf_dataset_cols(dataset: *const MbmfDataset) -> usize {
    unsafe { dataset.as_ref() }.map_or(0, |d| d.inner.n_cols())
}

/// # Safety
/// `dataset` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mbmf_dataset_nnz(dataset: *const MbmfDataset) -> usize {
    unsafe { dataset.as_ref() }.map_or(0, |d| d.inner.len())
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn mbmf_dataset_free(dataset: *mut MbmfDataset) {
    if !dataset.is_null() {
        drop(unsafe { Box::from_raw(dataset) });
    }
}

/// Trains on range-bounded data. With `nonnegative` true the data is shifted
/// by `min(r_min, 0)` and every product bounded by the shifted maximum; with
/// it false the data is centered by the range midpoint and bounded by the
/// half-width. Predictions from the model come back on the original scale.
///
/// # Safety
/// All pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbmf_train_bounded(
    dataset: *const MbmfDataset,
    options: *const MbmfTrainOptions,
    nonnegative: bool,
    r_min: f64,
    r_max: f64,
    out: *mut *mut MbmfModel,
) -> MbmfStatus {
    guarded(|| {
        let dataset = nonnull!(dataset);
        let options = nonnull!(options);
        if out.is_null() {
            set_error("null out pointer");
            return MbmfStatus::MbmfStatusNullArgument;
        }
        let data = &dataset.inner;
        let run = || -> Result<TrainedModel, Error> {
            let (train_data, mags, record) = if nonnegative {
                let (shifted, record) = shift_nonnegative(data, r_min);
                let mags = nonneg_range_magnitudes(
                    data.n_rows(),
                    data.n_cols(),
                    r_max - r_min.min(0.0),
                )?;
                (shifted, mags, record)
            } else {
                let (centered, record) = center_bounded(data, r_min, r_max)?;
                let mags = centered_range_magnitudes(data.n_rows(), data.n_cols(), r_min, r_max)?;
                (centered, mags, record)
            };
            let mut cfg = config_from(options);
            cfg.variant = record.variant;
            let (factors, _) = train(&train_data, &mags, &cfg)?;
            TrainedModel::new(
                factors,
                Some(record),
                data.row_labels().to_vec(),
                data.col_labels().to_vec(),
            )
        };
        match run() {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(MbmfModel { inner })) };
                MbmfStatus::MbmfStatusOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Trains with explicit per-row and per-column magnitudes and no
/// preprocessing: the data is taken as already centered or non-negative.
///
/// # Safety
/// `r_w` must point to `r_w_len` readable values and `r_h` to `r_h_len`;
/// the other pointer rules match [`mbmf_train_bounded`].
#[no_mangle]
pub unsafe extern "C" fn mbmf_train_with_magnitudes(
    dataset: *const MbmfDataset,
    options: *const MbmfTrainOptions,
    r_w: *const f64,
    r_w_len: usize,
    r_h: *const f64,
    r_h_len: usize,
    out: *mut *mut MbmfModel,
) -> MbmfStatus {
    guarded(|| {
        let dataset = nonnull!(dataset);
        let options = nonnull!(options);
        if out.is_null() || r_w.is_null() || r_h.is_null() {
            set_error("null pointer argument");
            return MbmfStatus::MbmfStatusNullArgument;
        }
        let r_w = unsafe { std::slice::from_raw_parts(r_w, r_w_len) };
        let r_h = unsafe { std::slice::from_raw_parts(r_h, r_h_len) };
        let data = &dataset.inner;
        let run = || -> Result<TrainedModel, Error> {
            let mags = MagnitudePair::new(r_w.to_vec(), r_h.to_vec())?;
            let (factors, _) = train(data, &mags, &config_from(options))?;
            TrainedModel::new(
                factors,
                None,
                data.row_labels().to_vec(),
                data.col_labels().to_vec(),
            )
        };
        match run() {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(MbmfModel { inner })) };
                MbmfStatus::MbmfStatusOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Predicts the cells `(rows[i], cols[i])`, writing `len` values to
/// `out_values`, de-centered to the original data scale when the model
/// carries a preprocessing record.
///
/// # Safety
/// `rows` and `cols` must hold `len` readable indices and `out_values` room
/// for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mbmf_model_predict(
    model: *const MbmfModel,
    rows: *const usize,
    cols: *const usize,
    len: usize,
    out_values: *mut f64,
) -> MbmfStatus {
    guarded(|| {
        let model = nonnull!(model);
        if len > 0 && (rows.is_null() || cols.is_null() || out_values.is_null()) {
            set_error("null array pointer");
            return MbmfStatus::MbmfStatusNullArgument;
        }
        let rows = unsafe { std::slice::from_raw_parts(rows, len) };
        let cols = unsafe { std::slice::from_raw_parts(cols, len) };
        let pairs: Vec<(usize, usize)> = rows.iter().copied().zip(cols.iter().copied()).collect();
        match predict(&model.inner.factors, model.inner.record.as_ref(), &pairs) {
            Ok(values) => {
                unsafe {
                    std::ptr::copy_nonoverlapping(values.as_ptr(), out_values, len);
                }
                MbmfStatus::MbmfStatusOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mbmf_model_rows(model: *const MbmfModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.factors.n_rows())
}

/// # Safety
/// `model` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mbmf_model_cols(model: *const MbmfModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.factors.n_cols())
}

/// # Safety
/// `model` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mbmf_model_k(model: *const MbmfModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.factors.k())
}

/// Saves a model to the versioned text format.
///
/// # Safety
/// Pointer rules as above.
#[no_mangle]
pub unsafe extern "C" fn mbmf_model_save(
    model: *const MbmfModel,
    path: *const c_char,
) -> MbmfStatus {
    guarded(|| {
        let model = nonnull!(model);
        let path = match unsafe { path_arg(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        match mbmf::model::save(&model.inner, path) {
            Ok(()) => MbmfStatus::MbmfStatusOk,
            Err(e) => fail(e),
        }
    })
}

/// Loads a model saved by [`mbmf_model_save`].
///
/// # Safety
/// Pointer rules as above.
#[no_mangle]
pub unsafe extern "C" fn mbmf_model_load(
    path: *const c_char,
    out: *mut *mut MbmfModel,
) -> MbmfStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return MbmfStatus::MbmfStatusNullArgument;
        }
        let path = match unsafe { path_arg(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        match mbmf::model::load(path) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(MbmfModel { inner })) };
                MbmfStatus::MbmfStatusOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn mbmf_model_free(model: *mut MbmfModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}
