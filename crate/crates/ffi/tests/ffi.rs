use std::ffi::{CStr, CString};
use std::ptr;

use leadone::densenet::{init_params, write_checkpoint, ModelConfig};
use leadone::preprocess::{synth_dataset, SynthSpec};
use leadone::study::{ItemSource, NewStudy, StudyService};
use leadone::Label;
use leadone_ffi::*;

fn last_error() -> String {
    let p = leadone_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(leadone_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn f1_and_interval() {
    let mut f1 = 0.0;
    assert_eq!(
        unsafe { leadone_f1_score(1.0, 0.961, &mut f1) },
        LeadoneStatus::Ok
    );
    assert!((f1 - 0.980).abs() < 5e-4);
    assert_eq!(
        unsafe { leadone_f1_score(0.0, 0.0, &mut f1) },
        LeadoneStatus::Undefined
    );
    assert_eq!(
        unsafe { leadone_f1_score(1.5, 0.5, &mut f1) },
        LeadoneStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { leadone_f1_score(0.5, 0.5, ptr::null_mut()) },
        LeadoneStatus::NullPointer
    );
    assert!(last_error().contains("null"));

    let (mut lo, mut hi) = (0.0, 0.0);
    assert_eq!(
        unsafe { leadone_kappa_interval(0.47, 0.039, &mut lo, &mut hi) },
        LeadoneStatus::Ok
    );
    assert!((lo - 0.39356).abs() < 1e-12 && (hi - 0.54644).abs() < 1e-12);
}

#[test]
fn kappa_through_label_codes() {
    let a = [0, 0, 0, 1, 1, 1];
    let b = [0, 0, 1, 0, 1, 1];
    let mut k = std::mem::MaybeUninit::<LeadoneKappa>::uninit();
    assert_eq!(
        unsafe { leadone_cohen_kappa(a.as_ptr(), b.as_ptr(), 6, k.as_mut_ptr()) },
        LeadoneStatus::Ok
    );
    let k = unsafe { k.assume_init() };
    assert!((k.kappa - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(k.band, LeadoneKappaBand::Fair);
    assert_eq!(k.n, 6);

    let mut out = std::mem::MaybeUninit::<LeadoneKappa>::uninit();
    let bad = [0, 7];
    assert_eq!(
        unsafe { leadone_cohen_kappa(bad.as_ptr(), bad.as_ptr(), 2, out.as_mut_ptr()) },
        LeadoneStatus::InvalidArgument
    );
    assert!(last_error().contains("7"));
    let same = [1, 1];
    assert_eq!(
        unsafe { leadone_cohen_kappa(same.as_ptr(), same.as_ptr(), 2, out.as_mut_ptr()) },
        LeadoneStatus::Undefined
    );
}

#[test]
fn roc_auc_binary() {
    let scores = [0.9, 0.5, 0.5, 0.1];
    let pos = [1u8, 1, 0, 0];
    let mut auc = 0.0;
    assert_eq!(
        unsafe { leadone_roc_auc(scores.as_ptr(), pos.as_ptr(), 4, &mut auc) },
        LeadoneStatus::Ok
    );
    assert!((auc - 0.875).abs() < 1e-15);
    assert_eq!(
        unsafe { leadone_roc_auc(scores.as_ptr(), [1u8; 4].as_ptr(), 4, &mut auc) },
        LeadoneStatus::Undefined
    );
}

#[test]
fn model_handle_lifecycle() {
    let config = ModelConfig::reduced();
    let mut params = init_params(&config, 3).unwrap();
    params.stats_updates = 1;
    let bytes = write_checkpoint(&params).unwrap();

    let mut model: *mut LeadoneModel = ptr::null_mut();
    assert_eq!(
        unsafe { leadone_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut model) },
        LeadoneStatus::Ok
    );
    let version = unsafe { CStr::from_ptr(leadone_model_version(model)) };
    assert_eq!(version.to_str().unwrap(), params.model_version);

    let record = &synth_dataset(&[SynthSpec::new(Label::Afib, 12.0, 250.0, 5)]).unwrap()[0].record;
    let samples = record.lead("I").unwrap();
    let mut pred = std::mem::MaybeUninit::<LeadonePrediction>::uninit();
    let status = unsafe {
        leadone_model_predict(
            model,
            samples.as_ptr(),
            samples.len(),
            250.0,
            pred.as_mut_ptr(),
        )
    };
    assert_eq!(status, LeadoneStatus::Ok);
    let pred = unsafe { pred.assume_init() };
    assert!((pred.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // Zero head: uniform output, first class wins the tie.
    assert_eq!(pred.predicted, LeadoneLabel::Nsr);

    let mut out = std::mem::MaybeUninit::<LeadonePrediction>::uninit();
    let short = &samples[..250 * 5];
    let status = unsafe {
        leadone_model_predict(model, short.as_ptr(), short.len(), 250.0, out.as_mut_ptr())
    };
    assert_eq!(status, LeadoneStatus::InvalidArgument);
    assert!(last_error().contains("outside"));
    unsafe { leadone_model_free(model) };

    let mut broken = bytes.clone();
    broken[20] ^= 0xff;
    let mut model: *mut LeadoneModel = ptr::null_mut();
    assert_eq!(
        unsafe { leadone_model_from_bytes(broken.as_ptr(), broken.len(), &mut model) },
        LeadoneStatus::Parse
    );
    assert!(model.is_null());
    let missing = CString::new("/nonexistent/model.ckpt").unwrap();
    assert_eq!(
        unsafe { leadone_model_load(missing.as_ptr(), &mut model) },
        LeadoneStatus::Io
    );
    unsafe { leadone_model_free(ptr::null_mut()) };
}

#[test]
fn study_submit_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let records = synth_dataset(&[
        SynthSpec::new(Label::Afib, 10.0, 250.0, 1),
        SynthSpec::new(Label::Nsr, 10.0, 250.0, 2),
    ])
    .unwrap();
    let items = records
        .iter()
        .map(|r| ItemSource {
            record_id: r.record.record_id().to_string(),
            segment_index: 0,
            dataset: "synthetic".into(),
            start_s: 0.0,
            reference_label: r.class,
            sampling_rate_hz: 250.0,
            samples_uv: r.record.lead("I").unwrap().to_vec(),
        })
        .collect();
    let created = StudyService::open(dir.path())
        .unwrap()
        .create_study(NewStudy {
            study_id: Some("s1".into()),
            seed: 1,
            raters: vec!["r1".into()],
            items,
        })
        .unwrap();

    let c = |s: &str| CString::new(s).unwrap();
    let data_dir = c(dir.path().to_str().unwrap());
    let mut service: *mut LeadoneStudyService = ptr::null_mut();
    assert_eq!(
        unsafe { leadone_study_open(data_dir.as_ptr(), &mut service) },
        LeadoneStatus::Ok
    );
    let (study, token) = (c("s1"), c(&created.raters[0].token));
    for item in ["item-0001", "item-0002"] {
        let status = unsafe {
            leadone_study_submit(
                service,
                study.as_ptr(),
                token.as_ptr(),
                c(item).as_ptr(),
                c("AFIB").as_ptr(),
            )
        };
        assert_eq!(status, LeadoneStatus::Ok);
    }
    let again = unsafe {
        leadone_study_submit(
            service,
            study.as_ptr(),
            token.as_ptr(),
            c("item-0001").as_ptr(),
            c("NSR").as_ptr(),
        )
    };
    assert_eq!(again, LeadoneStatus::Conflict);
    let bad_token = unsafe {
        leadone_study_submit(
            service,
            study.as_ptr(),
            c("x").as_ptr(),
            c("item-0001").as_ptr(),
            c("NSR").as_ptr(),
        )
    };
    assert_eq!(bad_token, LeadoneStatus::Auth);

    let admin = c(&created.admin_token);
    let mut text: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(
        unsafe { leadone_study_report(service, study.as_ptr(), admin.as_ptr(), 1, &mut text) },
        LeadoneStatus::Ok
    );
    let md = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_owned();
    assert!(md.contains("| r1 | 25.0 | 50.0 | 33.3 |"), "{md}");
    unsafe { leadone_string_free(text) };
    assert_eq!(
        unsafe { leadone_study_report(service, study.as_ptr(), token.as_ptr(), 0, &mut text) },
        LeadoneStatus::Auth
    );
    unsafe { leadone_study_free(service) };
}

#[test]
fn header_declares_the_api() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/leadone.h")).unwrap();
    for name in [
        "leadone_version",
        "leadone_last_error",
        "leadone_string_free",
        "leadone_model_load",
        "leadone_model_from_bytes",
        "leadone_model_free",
        "leadone_model_version",
        "leadone_model_predict",
        "leadone_f1_score",
        "leadone_kappa_interval",
        "leadone_cohen_kappa",
        "leadone_roc_auc",
        "leadone_study_open",
        "leadone_study_free",
        "leadone_study_submit",
        "leadone_study_report",
        "typedef struct LeadoneModel LeadoneModel;",
        "LEADONE_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"leadone.h\"\nint main(void) { return LEADONE_STATUS_OK; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| {
            std::process::Command::new(c)
                .arg("--version")
                .output()
                .is_ok()
        })
        .ok_or(())
}
