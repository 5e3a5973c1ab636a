//! C ABI over the firecast engine.
//!
//! Every fallible function returns an [`FcStatus`]; on failure the message
//! is available from [`fc_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use firecast::dataio::{synthesize, Container, SynthConfig, NUM_FEATURES};
use firecast::metrics::{pr_auc, roc_auc, MaskedPredictions};
use firecast::models::{build, Family, ModelGraph, ModelSpec, Width};
use firecast::report::ModelCard;
use firecast::tensor::Tensor;
use firecast::training::predict_logits;
use firecast::xai::{integrated_gradients, sample_input};
use firecast::Error;

/// Side of the square maps a model consumes and emits.
pub const FC_MAP_SIDE: usize = 32;
/// Number of input feature channels.
pub const FC_FEATURES: usize = 12;

const _: () = assert!(FC_FEATURES == NUM_FEATURES);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Format = 4,
    Io = 5,
    DigestMismatch = 6,
    UndefinedMetric = 7,
    NonFinite = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Opaque WFD1 dataset.
pub struct FcDataset {
    inner: Container,
}

/// Opaque segmentation model.
pub struct FcModel {
    inner: ModelGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(FcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Dimension { .. } | Error::NonScalarLoss { .. } => FcStatus::Dimension,
            Error::Format { .. } | Error::Json(_) | Error::Csv(_) => FcStatus::Format,
            Error::InvalidArgument(_) | Error::TapeConsumed => FcStatus::InvalidArgument,
            Error::UndefinedMetric { .. } => FcStatus::UndefinedMetric,
            Error::DigestMismatch { .. } => FcStatus::DigestMismatch,
            Error::NonFinite { .. } | Error::Diverged { .. } => FcStatus::NonFinite,
            Error::Io { .. } => FcStatus::Io,
        };
        Fail(status, e.to_string())
    }
}

fn fail<T>(status: FcStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return fail(FcStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p).to_str().or_else(|_| fail(FcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return fail(FcStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return fail(FcStatus::NullPointer, format!("{what} is null"));
    }
    if len < need {
        return fail(FcStatus::BufferTooSmall, format!("{what} holds {len} values, {need} needed"));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().map_or_else(|| fail(FcStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().map_or_else(|| fail(FcStatus::NullPointer, format!("{what} is null")), Ok)
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ------------------------------------------------------------- datasets

/// Loads a WFD1 container from `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_load(path: *const c_char, out: *mut *mut FcDataset) -> FcStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let c = Container::load(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(FcDataset { inner: c }));
        Ok(())
    })
}

/// Generates a synthetic container.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_synthesize(
    count: usize,
    height: usize,
    width: usize,
    seed: u64,
    separable: bool,
    out: *mut *mut FcDataset,
) -> FcStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let c = synthesize(&SynthConfig { count, h: height, w: width, seed, separable, ..Default::default() })?;
        *out = Box::into_raw(Box::new(FcDataset { inner: c }));
        Ok(())
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_len(ds: *const FcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_free(ds: *mut FcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

// --------------------------------------------------------------- models

/// Builds an untrained desk-scale model. `family` is one of `autoencoder`,
/// `resnet`, `unet`, `swin`; `width` is a multiplier such as `1/4`, or null
/// for the family default.
///
/// # Safety
/// String arguments must be NUL-terminated (`width` may be null); `out` must
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_model_build(
    family: *const c_char,
    width: *const c_char,
    seed: u64,
    out: *mut *mut FcModel,
) -> FcStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let fam: Family = str_arg(family, "family")?.parse()?;
        let mut spec = ModelSpec::desk(fam);
        if !width.is_null() {
            let w: Width = str_arg(width, "width")?.parse()?;
            spec = spec.with_width(w);
        }
        *out = Box::into_raw(Box::new(FcModel { inner: build(&spec, seed)? }));
        Ok(())
    })
}

/// Loads a PYC1 checkpoint together with its `<checkpoint>.json` model card.
///
/// # Safety
/// `checkpoint` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_model_load(checkpoint: *const c_char, out: *mut *mut FcModel) -> FcStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let (_, model) = ModelCard::load(&PathBuf::from(str_arg(checkpoint, "checkpoint")?))?;
        *out = Box::into_raw(Box::new(FcModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_model_free(m: *mut FcModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live model handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_model_param_count(m: *const FcModel, out: *mut u64) -> FcStatus {
    guard(|| {
        *out_ref(out, "out")? = handle(m, "model")?.inner.param_count() as u64;
        Ok(())
    })
}

/// FLOPs of one forward pass on a single `12×32×32` input.
///
/// # Safety
/// `m` must be a live model handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_model_flops(m: *const FcModel, out: *mut u64) -> FcStatus {
    guard(|| {
        *out_ref(out, "out")? = handle(m, "model")?.inner.flop_estimate();
        Ok(())
    })
}

/// Fire probabilities for `n` normalized inputs laid out `n×12×32×32`;
/// writes `n×32×32` values.
///
/// # Safety
/// `inputs` must hold `n·12·32·32` floats and `out` `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn fc_model_predict(
    m: *const FcModel,
    inputs: *const f32,
    n: usize,
    out: *mut f32,
    out_len: usize,
) -> FcStatus {
    guard(|| {
        let model = handle(m, "model")?;
        if n == 0 {
            return fail(FcStatus::InvalidArgument, "batch size is 0");
        }
        let hw = FC_MAP_SIDE * FC_MAP_SIDE;
        let x = slice_arg(inputs, n * FC_FEATURES * hw, "inputs")?;
        let out = out_slice(out, out_len, n * hw, "out")?;
        let t = Tensor::new(&[n, FC_FEATURES, FC_MAP_SIDE, FC_MAP_SIDE], x.to_vec())?;
        let logits = predict_logits(&model.inner, t)?;
        for (o, z) in out.iter_mut().zip(logits) {
            *o = 1.0 / (1.0 + (-z).exp());
        }
        Ok(())
    })
}

/// Integrated gradients of the summed logits for the centered, normalized
/// `32×32` crop of sample `sample_id`. Writes `12×32×32` attributions, 12
/// positive contribution ratios and the completeness gap.
///
/// # Safety
/// Handles must be live; `attributions` must hold `attributions_len` floats,
/// `pcr` 12 doubles, and `gap` may be null.
#[no_mangle]
pub unsafe extern "C" fn fc_integrated_gradients(
    m: *const FcModel,
    ds: *const FcDataset,
    sample_id: usize,
    steps: usize,
    attributions: *mut f32,
    attributions_len: usize,
    pcr: *mut f64,
    gap: *mut f64,
) -> FcStatus {
    guard(|| {
        let model = handle(m, "model")?;
        let data = handle(ds, "dataset")?;
        let out = out_slice(attributions, attributions_len, FC_FEATURES * FC_MAP_SIDE * FC_MAP_SIDE, "attributions")?;
        let pcr = out_slice(pcr, FC_FEATURES, FC_FEATURES, "pcr")?;
        let (x, _) = sample_input(&data.inner, sample_id)?;
        let ig = integrated_gradients(&model.inner, &x, steps)?;
        out.copy_from_slice(&ig.attributions);
        pcr.copy_from_slice(&ig.pcr.values);
        if let Some(g) = gap.as_mut() {
            *g = ig.completeness_gap;
        }
        Ok(())
    })
}

// -------------------------------------------------------------- metrics

unsafe fn masked(probs: *const f32, labels: *const f32, n: usize) -> Result<MaskedPredictions, Fail> {
    let p = slice_arg(probs, n, "probs")?;
    let l = slice_arg(labels, n, "labels")?;
    Ok(MaskedPredictions::new(p.to_vec(), l.to_vec())?)
}

/// ROC-AUC over pixels whose label is not −1.
///
/// # Safety
/// `probs` and `labels` must hold `n` floats; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_roc_auc(probs: *const f32, labels: *const f32, n: usize, out: *mut f64) -> FcStatus {
    guard(|| {
        let o = out_ref(out, "out")?;
        *o = roc_auc(&masked(probs, labels, n)?)?;
        Ok(())
    })
}

/// Average precision over pixels whose label is not −1.
///
/// # Safety
/// `probs` and `labels` must hold `n` floats; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_pr_auc(probs: *const f32, labels: *const f32, n: usize, out: *mut f64) -> FcStatus {
    guard(|| {
        let o = out_ref(out, "out")?;
        *o = pr_auc(&masked(probs, labels, n)?)?;
        Ok(())
    })
}
