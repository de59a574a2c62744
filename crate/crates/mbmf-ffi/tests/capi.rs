//! Exercises the C ABI exactly as a foreign caller would: raw pointers,
//! status codes, manual frees.

use std::ffi::{CStr, CString};
use std::ptr;

use mbmf_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mbmf_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

/// A fully observed 6x5 rank-one grid with values in [1, 4].
fn grid() -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut values = Vec::new();
    for i in 0..6usize {
        for j in 0..5usize {
            rows.push(i);
            cols.push(j);
            values.push(1.0 + ((i + 2 * j) % 4) as f64);
        }
    }
    (rows, cols, values)
}

#[test]
fn dataset_train_predict_save_load() {
    let (rows, cols, values) = grid();
    let mut dataset: *mut MbmfDataset = ptr::null_mut();
    let status = unsafe {
        mbmf_dataset_from_triplets(
            6,
            5,
            rows.as_ptr(),
            cols.as_ptr(),
            values.as_ptr(),
            values.len(),
            &mut dataset,
        )
    };
    assert_eq!(status, MbmfStatus::MbmfStatusOk, "{}", last_error());
    assert_eq!(unsafe { mbmf_dataset_rows(dataset) }, 6);
    assert_eq!(unsafe { mbmf_dataset_cols(dataset) }, 5);
    assert_eq!(unsafe { mbmf_dataset_nnz(dataset) }, 30);

    let mut options = mbmf_train_options_default(3);
    options.max_iters = 120;
    options.seed = 9;
    let mut model: *mut MbmfModel = ptr::null_mut();
    let status = unsafe { mbmf_train_bounded(dataset, &options, true, 1.0, 4.0, &mut model) };
    assert_eq!(status, MbmfStatus::MbmfStatusOk, "{}", last_error());
    assert_eq!(unsafe { mbmf_model_rows(model) }, 6);
    assert_eq!(unsafe { mbmf_model_cols(model) }, 5);
    assert_eq!(unsafe { mbmf_model_k(model) }, 3);

    let q_rows = [0usize, 3, 5];
    let q_cols = [0usize, 4, 2];
    let mut predictions = [0.0f64; 3];
    let status = unsafe {
        mbmf_model_predict(model, q_rows.as_ptr(), q_cols.as_ptr(), 3, predictions.as_mut_ptr())
    };
    assert_eq!(status, MbmfStatus::MbmfStatusOk, "{}", last_error());
    // Non-negative variant with r_max 4: raw products are bounded by 4.
    for p in predictions {
        assert!(p.is_finite());
        assert!(p.abs() <= 4.0 + 1e-9, "prediction {p} above the bound");
    }

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("model.txt").to_str().unwrap()).unwrap();
    let status = unsafe { mbmf_model_save(model, path.as_ptr()) };
    assert_eq!(status, MbmfStatus::MbmfStatusOk, "{}", last_error());

    let mut reloaded: *mut MbmfModel = ptr::null_mut();
    let status = unsafe { mbmf_model_load(path.as_ptr(), &mut reloaded) };
    assert_eq!(status, MbmfStatus::MbmfStatusOk, "{}", last_error());
    let mut again = [0.0f64; 3];
    let status = unsafe {
        mbmf_model_predict(reloaded, q_rows.as_ptr(), q_cols.as_ptr(), 3, again.as_mut_ptr())
    };
    assert_eq!(status, MbmfStatus::MbmfStatusOk);
    assert_eq!(predictions, again, "persistence must be bit-exact");

    unsafe {
        mbmf_model_free(model);
        mbmf_model_free(reloaded);
        mbmf_dataset_free(dataset);
    }
}

#[test]
fn explicit_magnitudes_and_bound_checks() {
    let (rows, cols, values) = grid();
    let mut dataset: *mut MbmfDataset = ptr::null_mut();
    unsafe {
        mbmf_dataset_from_triplets(
            6,
            5,
            rows.as_ptr(),
            cols.as_ptr(),
            values.as_ptr(),
            values.len(),
            &mut dataset,
        )
    };

    let r_w = [2.0f64; 6];
    let r_h = [2.0f64; 5];
    let mut options = mbmf_train_options_default(2);
    options.max_iters = 80;
    let mut model: *mut MbmfModel = ptr::null_mut();
    let status = unsafe {
        mbmf_train_with_magnitudes(dataset, &options, r_w.as_ptr(), 6, r_h.as_ptr(), 5, &mut model)
    };
    assert_eq!(status, MbmfStatus::MbmfStatusOk, "{}", last_error());

    // Every cell of the raw product is bounded by r_w * r_h = 4.
    let mut q_rows = Vec::new();
    let mut q_cols = Vec::new();
    for i in 0..6usize {
        for j in 0..5usize {
            q_rows.push(i);
            q_cols.push(j);
        }
    }
    let mut predictions = vec![0.0f64; 30];
    unsafe {
        mbmf_model_predict(model, q_rows.as_ptr(), q_cols.as_ptr(), 30, predictions.as_mut_ptr())
    };
    for p in predictions {
        assert!(p.abs() <= 4.0 + 1e-9);
    }

    // Out-of-range prediction indices are rejected.
    let bad_rows = [17usize];
    let bad_cols = [0usize];
    let mut sink = [0.0f64];
    let status = unsafe {
        mbmf_model_predict(model, bad_rows.as_ptr(), bad_cols.as_ptr(), 1, sink.as_mut_ptr())
    };
    assert_eq!(status, MbmfStatus::MbmfStatusOutOfRange);
    assert!(last_error().contains("17"));

    unsafe {
        mbmf_model_free(model);
        mbmf_dataset_free(dataset);
    }
}

#[test]
fn errors_set_status_and_message() {
    // Null out pointer.
    let status = unsafe { mbmf_dataset_load(ptr::null(), b',' as _, false, ptr::null_mut()) };
    assert_eq!(status, MbmfStatus::MbmfStatusNullArgument);

    // Missing file.
    let path = CString::new("/no/such/file.csv").unwrap();
    let mut dataset: *mut MbmfDataset = ptr::null_mut();
    let status = unsafe { mbmf_dataset_load(path.as_ptr(), b',' as _, false, &mut dataset) };
    assert_eq!(status, MbmfStatus::MbmfStatusIo);
    assert!(dataset.is_null(), "out must stay untouched on failure");
    assert!(!last_error().is_empty());

    // Duplicate triplets.
    let rows = [0usize, 0];
    let cols = [0usize, 0];
    let values = [1.0f64, 2.0];
    let status = unsafe {
        mbmf_dataset_from_triplets(1, 1, rows.as_ptr(), cols.as_ptr(), values.as_ptr(), 2, &mut dataset)
    };
    assert_eq!(status, MbmfStatus::MbmfStatusParse);
    assert!(last_error().contains("duplicate"));

    // Invalid latent dimension.
    let good_rows = [0usize];
    let good_cols = [0usize];
    let good_values = [1.0f64];
    let status = unsafe {
        mbmf_dataset_from_triplets(
            1,
            1,
            good_rows.as_ptr(),
            good_cols.as_ptr(),
            good_values.as_ptr(),
            1,
            &mut dataset,
        )
    };
    assert_eq!(status, MbmfStatus::MbmfStatusOk);
    let options = mbmf_train_options_default(1);
    let mut model: *mut MbmfModel = ptr::null_mut();
    let status = unsafe { mbmf_train_bounded(dataset, &options, true, 0.0, 1.0, &mut model) };
    assert_eq!(status, MbmfStatus::MbmfStatusInvalidArgument);
    assert!(model.is_null());

    unsafe { mbmf_dataset_free(dataset) };
}

#[test]
fn generated_header_covers_the_surface() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/mbmf.h"
    ))
    .expect("the build script generates include/mbmf.h");
    for symbol in [
        "MBMF_STATUS_OK",
        "typedef struct MbmfDataset MbmfDataset;",
        "typedef struct MbmfModel MbmfModel;",
        "MbmfTrainOptions mbmf_train_options_default(size_t k);",
        "mbmf_dataset_load",
        "mbmf_dataset_from_triplets",
        "mbmf_dataset_free",
        "mbmf_train_bounded",
        "mbmf_train_with_magnitudes",
        "mbmf_model_predict",
        "mbmf_model_save",
        "mbmf_model_load",
        "mbmf_model_free",
        "mbmf_last_error_message",
    ] {
        assert!(header.contains(symbol), "header is missing `{symbol}`");
    }
}
