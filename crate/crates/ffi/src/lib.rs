//! C ABI for `leadone`.
//!
//! Every fallible function returns a [`LeadoneStatus`]; on failure
//! [`leadone_last_error`] describes the most recent error on the calling
//! thread. Handles are opaque, created by `*_open`/`*_load` functions and
//! released with the matching `*_free`. Strings returned through `char **`
//! out-parameters are owned by the caller and released with
//! [`leadone_string_free`].
//!
//! Label codes follow [`LeadoneLabel`]; probability vectors are in model
//! order NSR, AFIB, OTHER, NOISE.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Mutex;

use leadone::densenet::{read_checkpoint, ModelError, Params, Pipeline};
use leadone::label::ALL_LABELS;
use leadone::metrics::{cohen_kappa, f1_score, kappa_ci, roc_binary, KappaBand, MetricsError};
use leadone::preprocess::Segment;
use leadone::study::{StudyError, StudyService};
use leadone::Label;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeadoneStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Model = 5,
    Numeric = 6,
    Auth = 7,
    NotFound = 8,
    Conflict = 9,
    Undefined = 10,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeadoneLabel {
    Afib = 0,
    Nsr = 1,
    Other = 2,
    NotSure = 3,
    Noise = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeadoneKappaBand {
    None = 0,
    Slight = 1,
    Fair = 2,
    Moderate = 3,
    Substantial = 4,
    AlmostPerfect = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadoneKappa {
    pub kappa: f64,
    pub pr_a: f64,
    pub pr_e: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// NaN when the standard error is 0.
    pub p_value: f64,
    pub band: LeadoneKappaBand,
    pub n: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadonePrediction {
    /// NSR, AFIB, OTHER, NOISE.
    pub probabilities: [f64; 4],
    pub predicted: LeadoneLabel,
}

/// A loaded checkpoint and its preprocessing pipeline.
pub struct LeadoneModel {
    params: Params,
    pipeline: Mutex<Pipeline>,
    version: CString,
}

/// Study logs under one data directory.
pub struct LeadoneStudyService {
    inner: StudyService,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (LeadoneStatus, String);

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LeadoneStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LeadoneStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LeadoneStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (LeadoneStatus::NullPointer, format!("{what} is null"))
}

fn model_failure(e: ModelError) -> Failure {
    let status = match e {
        ModelError::Numeric(_) | ModelError::Diverged { .. } => LeadoneStatus::Numeric,
        ModelError::Checkpoint(_) => LeadoneStatus::Parse,
        _ => LeadoneStatus::Model,
    };
    (status, e.to_string())
}

fn metrics_failure(e: MetricsError) -> Failure {
    let status = match e {
        MetricsError::DegenerateAgreement | MetricsError::UndefinedAuc { .. } => {
            LeadoneStatus::Undefined
        }
        _ => LeadoneStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn study_failure(e: StudyError) -> Failure {
    let status = match e {
        StudyError::Argument(_) | StudyError::EmptyReport => LeadoneStatus::InvalidArgument,
        StudyError::Auth(_) => LeadoneStatus::Auth,
        StudyError::NotFound(_) => LeadoneStatus::NotFound,
        StudyError::Conflict(_) => LeadoneStatus::Conflict,
        StudyError::Storage(_) => LeadoneStatus::Io,
        StudyError::Corrupt(_) => LeadoneStatus::Parse,
    };
    (status, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        (
            LeadoneStatus::InvalidArgument,
            format!("{what} is not UTF-8"),
        )
    })
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn label_of(code: i32) -> Result<Label, Failure> {
    usize::try_from(code)
        .ok()
        .and_then(|i| ALL_LABELS.get(i).copied())
        .ok_or_else(|| {
            (
                LeadoneStatus::InvalidArgument,
                format!("label code {code} is out of range"),
            )
        })
}

fn label_code(label: Label) -> LeadoneLabel {
    match label {
        Label::Afib => LeadoneLabel::Afib,
        Label::Nsr => LeadoneLabel::Nsr,
        Label::Other => LeadoneLabel::Other,
        Label::NotSure => LeadoneLabel::NotSure,
        Label::Noise => LeadoneLabel::Noise,
    }
}

fn band_code(band: KappaBand) -> LeadoneKappaBand {
    match band {
        KappaBand::None => LeadoneKappaBand::None,
        KappaBand::Slight => LeadoneKappaBand::Slight,
        KappaBand::Fair => LeadoneKappaBand::Fair,
        KappaBand::Moderate => LeadoneKappaBand::Moderate,
        KappaBand::Substantial => LeadoneKappaBand::Substantial,
        KappaBand::AlmostPerfect => LeadoneKappaBand::AlmostPerfect,
    }
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| {
        (
            LeadoneStatus::InvalidArgument,
            "string contains nul".to_string(),
        )
    })?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn leadone_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn leadone_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn leadone_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn model_from_params(params: Params) -> Result<Box<LeadoneModel>, Failure> {
    let version = CString::new(params.model_version.clone()).map_err(|_| {
        (
            LeadoneStatus::Parse,
            "model version contains nul".to_string(),
        )
    })?;
    Ok(Box::new(LeadoneModel {
        pipeline: Mutex::new(Pipeline::new(&params.config)),
        params,
        version,
    }))
}

/// Loads a checkpoint from an in-memory buffer.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leadone_model_from_bytes(
    bytes: *const u8,
    len: usize,
    out: *mut *mut LeadoneModel,
) -> LeadoneStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let bytes = slice_arg(bytes, len, "bytes")?;
        let params = read_checkpoint(bytes).map_err(model_failure)?;
        *out = Box::into_raw(model_from_params(params)?);
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leadone_model_load(
    path: *const c_char,
    out: *mut *mut LeadoneModel,
) -> LeadoneStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let bytes = std::fs::read(path).map_err(|e| (LeadoneStatus::Io, format!("{path}: {e}")))?;
        let params = read_checkpoint(&bytes).map_err(model_failure)?;
        *out = Box::into_raw(model_from_params(params)?);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn leadone_model_free(model: *mut LeadoneModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Model version string, owned by the handle; null for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn leadone_model_version(model: *const LeadoneModel) -> *const c_char {
    model
        .as_ref()
        .map_or(std::ptr::null(), |m| m.version.as_ptr())
}

/// Classifies one lead-I segment of 10–30 s given in microvolts.
///
/// # Safety
/// `model` must be a live handle, `samples_uv` must point to `n` doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leadone_model_predict(
    model: *const LeadoneModel,
    samples_uv: *const f64,
    n: usize,
    sampling_rate_hz: f64,
    out: *mut LeadonePrediction,
) -> LeadoneStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err((
                LeadoneStatus::InvalidArgument,
                "sampling rate must be positive".into(),
            ));
        }
        let samples = slice_arg(samples_uv, n, "samples_uv")?;
        let segment = Segment {
            parent_id: "ffi".into(),
            segment_index: 0,
            lead_name: "I".into(),
            samples: samples.to_vec(),
            sampling_rate_hz,
            start_s: 0.0,
            duration_s: n as f64 / sampling_rate_hz,
            reference_label: None,
        };
        let mut pipeline = model
            .pipeline
            .lock()
            .map_err(|_| (LeadoneStatus::Panic, "pipeline lock poisoned".to_string()))?;
        let p = pipeline
            .predict(&model.params, &segment)
            .map_err(|e| match e.model_error {
                Some(m) => model_failure(m),
                None => (LeadoneStatus::InvalidArgument, e.to_string()),
            })?;
        *out = LeadonePrediction {
            probabilities: p.probabilities,
            predicted: label_code(p.predicted_class),
        };
        Ok(())
    })
}

/// Harmonic mean of precision and recall; `LEADONE_STATUS_UNDEFINED` when both are 0.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leadone_f1_score(
    precision: f64,
    recall: f64,
    out: *mut f64,
) -> LeadoneStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !((0.0..=1.0).contains(&precision) && (0.0..=1.0).contains(&recall)) {
            return Err((
                LeadoneStatus::InvalidArgument,
                "precision and recall must lie in [0, 1]".into(),
            ));
        }
        *out = f1_score(precision, recall).ok_or((
            LeadoneStatus::Undefined,
            "precision + recall is 0".to_string(),
        ))?;
        Ok(())
    })
}

/// `kappa ± 1.96·se`, clamped to [-1, 1].
///
/// # Safety
/// `low` and `high` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leadone_kappa_interval(
    kappa: f64,
    se: f64,
    low: *mut f64,
    high: *mut f64,
) -> LeadoneStatus {
    guard(|| {
        if low.is_null() || high.is_null() {
            return Err(null("low/high"));
        }
        if !(kappa.is_finite() && se.is_finite() && se >= 0.0) {
            return Err((
                LeadoneStatus::InvalidArgument,
                "kappa and se must be finite, se ≥ 0".into(),
            ));
        }
        (*low, *high) = kappa_ci(kappa, se);
        Ok(())
    })
}

/// Cohen's kappa of two aligned label-code arrays.
///
/// # Safety
/// `reference` and `other` must point to `n` ints; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leadone_cohen_kappa(
    reference: *const i32,
    other: *const i32,
    n: usize,
    out: *mut LeadoneKappa,
) -> LeadoneStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a: Vec<Label> = slice_arg(reference, n, "reference")?
            .iter()
            .map(|&c| label_of(c))
            .collect::<Result<_, _>>()?;
        let b: Vec<Label> = slice_arg(other, n, "other")?
            .iter()
            .map(|&c| label_of(c))
            .collect::<Result<_, _>>()?;
        let k = cohen_kappa(&a, &b).map_err(metrics_failure)?;
        *out = LeadoneKappa {
            kappa: k.kappa,
            pr_a: k.pr_a,
            pr_e: k.pr_e,
            se: k.se,
            ci_low: k.ci_low,
            ci_high: k.ci_high,
            p_value: k.p_value.unwrap_or(f64::NAN),
            band: band_code(k.band),
            n: k.n,
        };
        Ok(())
    })
}

/// Trapezoidal ROC AUC of a binary problem (`positives[i] != 0`).
///
/// # Safety
/// `scores` and `positives` must point to `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leadone_roc_auc(
    scores: *const f64,
    positives: *const u8,
    n: usize,
    out: *mut f64,
) -> LeadoneStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scores = slice_arg(scores, n, "scores")?;
        let pos: Vec<bool> = slice_arg(positives, n, "positives")?
            .iter()
            .map(|&p| p != 0)
            .collect();
        *out = roc_binary(scores, &pos, "binary")
            .map_err(metrics_failure)?
            .auc;
        Ok(())
    })
}

/// Opens (creating if needed) the study store under `data_dir`.
///
/// # Safety
/// `data_dir` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leadone_study_open(
    data_dir: *const c_char,
    out: *mut *mut LeadoneStudyService,
) -> LeadoneStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = str_arg(data_dir, "data_dir")?;
        let inner = StudyService::open(Path::new(dir)).map_err(study_failure)?;
        *out = Box::into_raw(Box::new(LeadoneStudyService { inner }));
        Ok(())
    })
}

/// # Safety
/// `service` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn leadone_study_free(service: *mut LeadoneStudyService) {
    if !service.is_null() {
        drop(Box::from_raw(service));
    }
}

/// Commits one rater answer (`AFIB`, `NSR`, `OTHER` or `NOT-SURE`).
///
/// # Safety
/// `service` must be a live handle and every string nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn leadone_study_submit(
    service: *mut LeadoneStudyService,
    study_id: *const c_char,
    rater_token: *const c_char,
    item_id: *const c_char,
    label: *const c_char,
) -> LeadoneStatus {
    guard(|| {
        let service = service.as_mut().ok_or_else(|| null("service"))?;
        service
            .inner
            .submit_annotation(
                str_arg(study_id, "study_id")?,
                str_arg(rater_token, "rater_token")?,
                str_arg(item_id, "item_id")?,
                str_arg(label, "label")?,
            )
            .map_err(study_failure)?;
        Ok(())
    })
}

/// Agreement report as JSON (`markdown == 0`) or markdown tables.
///
/// # Safety
/// `service` must be a live handle, strings nul-terminated and `out`
/// writable; free the result with [`leadone_string_free`].
#[no_mangle]
pub unsafe extern "C" fn leadone_study_report(
    service: *const LeadoneStudyService,
    study_id: *const c_char,
    admin_token: *const c_char,
    markdown: i32,
    out: *mut *mut c_char,
) -> LeadoneStatus {
    guard(|| {
        let service = service.as_ref().ok_or_else(|| null("service"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let report = service
            .inner
            .report(
                str_arg(study_id, "study_id")?,
                str_arg(admin_token, "admin_token")?,
            )
            .map_err(study_failure)?;
        let text = if markdown != 0 {
            report.to_markdown()
        } else {
            report
                .to_json()
                .map_err(|e| (LeadoneStatus::InvalidArgument, e.to_string()))?
        };
        out_string(out, text)
    })
}
