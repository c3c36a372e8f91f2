//! End-to-end exercise of the C API against a real model document, with the
//! native Rust inference path as the oracle.

use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use loadcast::baselines::fnn::FnnModel;
use loadcast::document::{ModelDocument, ModelSpec};
use loadcast::net::{CellKind, Mode, NetworkParams};
use loadcast::pipeline::{engineer, EngineerConfig, FeaturePipeline};
use loadcast::synth::{generate_synthetic_grid, SynthConfig};

use loadcast_ffi::{
    lc_last_error_message, lc_mape, lc_model_column_name, lc_model_free, lc_model_info,
    lc_model_label, lc_model_load, lc_predict, LcModel, LcModelInfo, LcStatus,
};

fn last_error() -> String {
    unsafe { CStr::from_ptr(lc_last_error_message()) }
        .to_str()
        .unwrap()
        .to_string()
}

fn load(path: &Path) -> *mut LcModel {
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut LcModel = std::ptr::null_mut();
    let status = unsafe { lc_model_load(c_path.as_ptr(), &mut handle) };
    assert_eq!(status, LcStatus::Ok, "load failed: {}", last_error());
    assert!(!handle.is_null());
    handle
}

fn fetch_info(handle: *const LcModel) -> LcModelInfo {
    let mut info = LcModelInfo {
        n_steps: 0,
        raw_width: 0,
        engineered_width: 0,
        parameter_count: 0,
        sequence_model: 9,
    };
    assert_eq!(unsafe { lc_model_info(handle, &mut info) }, LcStatus::Ok);
    info
}

fn fetch_string(call: impl FnOnce(*mut c_char, usize) -> LcStatus) -> String {
    let mut buf = [0 as c_char; 128];
    assert_eq!(call(buf.as_mut_ptr(), buf.len()), LcStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string()
}

/// A small but real engineered pipeline over synthetic feeder data.
fn small_pipeline() -> FeaturePipeline {
    let cfg = SynthConfig {
        n_feeders: 8,
        years: 9,
        transfer_count: 0,
        seed: 11,
        ..SynthConfig::default()
    };
    let (regional, feeders, _) = generate_synthetic_grid(&cfg).unwrap();
    let ds = engineer(
        &feeders,
        &regional,
        &[],
        &EngineerConfig {
            seed: 5,
            ..EngineerConfig::default()
        },
    )
    .unwrap();
    ds.pipeline
}

/// One plausible raw window in schema column order, oldest year first.
fn raw_window(pipeline: &FeaturePipeline) -> Vec<f64> {
    let width = pipeline.raw_schema.width();
    assert_eq!(width, 9, "expected the default raw layout for this test");
    let mut rows = Vec::new();
    for (peak, temp, dtemp) in [(410.0, 32.1, -0.4), (422.0, 33.0, 0.9), (431.0, 33.6, 0.6)] {
        rows.extend_from_slice(&[
            peak, 0.42, 0.31, // prev peak and composition shares
            2.4, 1.1, 0.9, // economic growth columns
            temp, dtemp, 0.0, // weather and large-customer change
        ]);
    }
    assert_eq!(rows.len(), pipeline.n_steps * width);
    rows
}

/// The native Rust answer for the same window.
fn native_prediction(doc: &ModelDocument, flat: &[f64]) -> f64 {
    let width = doc.pipeline.raw_schema.width();
    let steps: Vec<Vec<f64>> = flat
        .chunks(width)
        .map(|row| doc.pipeline.transform_step(row).unwrap())
        .collect();
    let normalized = doc.model.predict_window(&steps).unwrap();
    doc.pipeline.denormalize_peak(normalized)
}

#[test]
fn sequence_document_round_trip() {
    let pipeline = small_pipeline();
    let net = NetworkParams::init(
        CellKind::Gru,
        Mode::ManyToOne,
        pipeline.n_steps,
        pipeline.engineered_width(),
        5,
        3,
    )
    .unwrap();
    let doc = ModelDocument::new(ModelSpec::Sequence(net), pipeline, None);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    doc.save(&path).unwrap();

    let handle = load(&path);
    let info = fetch_info(handle);
    assert_eq!(info.n_steps, doc.pipeline.n_steps);
    assert_eq!(info.raw_width, doc.pipeline.raw_schema.width());
    assert_eq!(info.engineered_width, doc.pipeline.engineered_width());
    assert_eq!(info.parameter_count, doc.model.parameter_count());
    assert_eq!(info.sequence_model, 1);

    let label = fetch_string(|buf, cap| unsafe { lc_model_label(handle, buf, cap) });
    assert_eq!(label, "gru-many-to-one");

    let first = fetch_string(|buf, cap| unsafe { lc_model_column_name(handle, 0, buf, cap) });
    assert_eq!(first, "prev_peak");
    let names: Vec<String> = (0..info.raw_width)
        .map(|i| fetch_string(|buf, cap| unsafe { lc_model_column_name(handle, i, buf, cap) }))
        .collect();
    assert_eq!(names, doc.pipeline.raw_schema.column_names());
    let mut buf = [0 as c_char; 8];
    assert_eq!(
        unsafe { lc_model_column_name(handle, info.raw_width, buf.as_mut_ptr(), buf.len()) },
        LcStatus::Domain
    );

    let window = raw_window(&doc.pipeline);
    let mut out = f64::NAN;
    let status = unsafe {
        lc_predict(handle, window.as_ptr(), info.n_steps, info.raw_width, &mut out)
    };
    assert_eq!(status, LcStatus::Ok, "{}", last_error());
    assert_eq!(out, native_prediction(&doc, &window), "C and native paths disagree");

    // dimension and argument errors
    let status = unsafe {
        lc_predict(handle, window.as_ptr(), info.n_steps - 1, info.raw_width, &mut out)
    };
    assert_eq!(status, LcStatus::Shape);
    assert!(last_error().contains("model expects"));
    let status =
        unsafe { lc_predict(handle, std::ptr::null(), info.n_steps, info.raw_width, &mut out) };
    assert_eq!(status, LcStatus::NullArgument);
    let mut poisoned = window.clone();
    poisoned[4] = f64::NAN;
    let status = unsafe {
        lc_predict(handle, poisoned.as_ptr(), info.n_steps, info.raw_width, &mut out)
    };
    assert_eq!(status, LcStatus::Domain);

    unsafe { lc_model_free(handle) };
}

#[test]
fn feed_forward_document_round_trip() {
    let pipeline = small_pipeline();
    let fnn = FnnModel::init(pipeline.engineered_width(), &[6], 4).unwrap();
    let doc = ModelDocument::new(ModelSpec::FeedForward(fnn), pipeline, None);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fnn.json");
    doc.save(&path).unwrap();

    let handle = load(&path);
    let info = fetch_info(handle);
    assert_eq!(info.sequence_model, 0);
    let label = fetch_string(|buf, cap| unsafe { lc_model_label(handle, buf, cap) });
    assert_eq!(label, format!("fnn-{}in", doc.pipeline.engineered_width()));

    let window = raw_window(&doc.pipeline);
    let mut out = f64::NAN;
    let status = unsafe {
        lc_predict(handle, window.as_ptr(), info.n_steps, info.raw_width, &mut out)
    };
    assert_eq!(status, LcStatus::Ok, "{}", last_error());
    assert_eq!(out, native_prediction(&doc, &window));

    unsafe { lc_model_free(handle) };
}

#[test]
fn load_failures_carry_status_and_message() {
    let dir = tempfile::tempdir().unwrap();
    let mut handle: *mut LcModel = std::ptr::null_mut();

    let missing = CString::new(dir.path().join("absent.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { lc_model_load(missing.as_ptr(), &mut handle) }, LcStatus::Io);
    assert!(handle.is_null());
    assert!(last_error().contains("absent.json"));

    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{\"format\": \"something else\"}").unwrap();
    let junk_c = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { lc_model_load(junk_c.as_ptr(), &mut handle) }, LcStatus::Parse);
    assert!(handle.is_null());
}

#[test]
fn mape_through_the_c_surface() {
    let actuals = [550.0, 521.0];
    let forecasts = [539.0, 547.0];
    let mut out = f64::NAN;
    assert_eq!(
        unsafe { lc_mape(actuals.as_ptr(), forecasts.as_ptr(), 2, &mut out) },
        LcStatus::Ok
    );
    assert!((out - 3.4952).abs() < 5e-5);
}
