use std::ffi::{CStr, CString};
use std::ptr;

use firecast::dataio::{synthesize, SynthConfig};
use firecast::models::{build, Family, ModelSpec, Width};
use firecast::xai::{integrated_gradients, sample_input};
use firecast_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(fc_last_error()) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn metrics_reproduce_worked_examples() {
    let mut out = 0.0;
    let (p, l) = ([0.1f32, 0.4, 0.35, 0.8], [0.0f32, 0.0, 1.0, 1.0]);
    assert_eq!(unsafe { fc_roc_auc(p.as_ptr(), l.as_ptr(), 4, &mut out) }, FcStatus::Ok);
    assert_eq!(out, 0.75);
    let (p, l) = ([0.8f32, 0.4, 0.35, 0.1], [1.0f32, 0.0, 1.0, 0.0]);
    assert_eq!(unsafe { fc_pr_auc(p.as_ptr(), l.as_ptr(), 4, &mut out) }, FcStatus::Ok);
    assert!((out - 5.0 / 6.0).abs() < 1e-12);
    assert!(last_error().is_empty());
}

#[test]
fn single_class_metrics_report_undefined() {
    let mut out = 0.0;
    let (p, l) = ([0.1f32, 0.4], [0.0f32, -1.0]);
    assert_eq!(unsafe { fc_roc_auc(p.as_ptr(), l.as_ptr(), 2, &mut out) }, FcStatus::UndefinedMetric);
    assert!(!last_error().is_empty());
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = 0.0;
    let l = [1.0f32];
    assert_eq!(unsafe { fc_roc_auc(ptr::null(), l.as_ptr(), 1, &mut out) }, FcStatus::NullPointer);
    assert!(last_error().contains("probs"));
    assert_eq!(unsafe { fc_model_build(ptr::null(), ptr::null(), 0, ptr::null_mut()) }, FcStatus::NullPointer);
    let mut n = 0u64;
    assert_eq!(unsafe { fc_model_param_count(ptr::null(), &mut n) }, FcStatus::NullPointer);
    assert_eq!(unsafe { fc_dataset_len(ptr::null()) }, 0);
    unsafe {
        fc_model_free(ptr::null_mut());
        fc_dataset_free(ptr::null_mut());
    }
}

#[test]
fn unknown_family_and_bad_width_are_invalid() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { fc_model_build(c("vgg").as_ptr(), ptr::null(), 0, &mut m) }, FcStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(last_error().contains("vgg"));
    assert_eq!(unsafe { fc_model_build(c("unet").as_ptr(), c("1/3").as_ptr(), 0, &mut m) }, FcStatus::InvalidArgument);
}

#[test]
fn model_costs_match_the_library() {
    for (name, fam) in [("autoencoder", Family::Autoencoder), ("resnet", Family::ResEncoderDecoder), ("unet", Family::UNet), ("swin", Family::SwinUNet)] {
        let mut m = ptr::null_mut();
        assert_eq!(unsafe { fc_model_build(c(name).as_ptr(), ptr::null(), 3, &mut m) }, FcStatus::Ok);
        let g = build(&ModelSpec::desk(fam), 3).unwrap();
        let (mut p, mut f) = (0u64, 0u64);
        unsafe {
            assert_eq!(fc_model_param_count(m, &mut p), FcStatus::Ok);
            assert_eq!(fc_model_flops(m, &mut f), FcStatus::Ok);
            fc_model_free(m);
        }
        assert_eq!(p, g.param_count() as u64);
        assert_eq!(f, g.flop_estimate());
    }
}

#[test]
fn predict_and_ig_agree_with_the_library() {
    let mut m = ptr::null_mut();
    let mut ds = ptr::null_mut();
    unsafe {
        assert_eq!(fc_model_build(c("unet").as_ptr(), c("1/8").as_ptr(), 1, &mut m), FcStatus::Ok);
        assert_eq!(fc_dataset_synthesize(3, 32, 32, 4, false, &mut ds), FcStatus::Ok);
        assert_eq!(fc_dataset_len(ds), 3);
    }
    let data = synthesize(&SynthConfig { count: 3, h: 32, w: 32, seed: 4, ..Default::default() }).unwrap();
    let model = build(&ModelSpec::desk(Family::UNet).with_width(Width::new(1, 8).unwrap()), 1).unwrap();
    let (x, _) = sample_input(&data, 1).unwrap();

    let mut probs = vec![0.0f32; 2 * 1024];
    let batch: Vec<f32> = x.data().iter().chain(x.data()).copied().collect();
    assert_eq!(unsafe { fc_model_predict(m, batch.as_ptr(), 2, probs.as_mut_ptr(), probs.len()) }, FcStatus::Ok);
    assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
    assert_eq!(probs[..1024], probs[1024..]);
    let mut short = vec![0.0f32; 10];
    assert_eq!(unsafe { fc_model_predict(m, batch.as_ptr(), 2, short.as_mut_ptr(), 10) }, FcStatus::BufferTooSmall);

    let mut attr = vec![0.0f32; FC_FEATURES * 1024];
    let mut pcr = [0.0f64; FC_FEATURES];
    let mut gap = 0.0f64;
    let st = unsafe { fc_integrated_gradients(m, ds, 1, 16, attr.as_mut_ptr(), attr.len(), pcr.as_mut_ptr(), &mut gap) };
    assert_eq!(st, FcStatus::Ok, "{}", last_error());
    let ig = integrated_gradients(&model, &x, 16).unwrap();
    assert_eq!(attr, ig.attributions);
    assert_eq!(pcr.to_vec(), ig.pcr.values);
    assert_eq!(gap, ig.completeness_gap);
    let st = unsafe { fc_integrated_gradients(m, ds, 3, 16, attr.as_mut_ptr(), attr.len(), pcr.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(st, FcStatus::InvalidArgument);
    unsafe {
        fc_model_free(m);
        fc_dataset_free(ds);
    }
}

#[test]
fn missing_files_are_io_errors() {
    let mut ds = ptr::null_mut();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(fc_dataset_load(c("/nonexistent/x.wfd1").as_ptr(), &mut ds), FcStatus::Io);
        assert_eq!(fc_model_load(c("/nonexistent/x.pyc1").as_ptr(), &mut m), FcStatus::Io);
    }
    assert!(ds.is_null() && m.is_null());
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(fc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
