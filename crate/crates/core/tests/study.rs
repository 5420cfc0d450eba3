mod common;

use std::collections::BTreeSet;
use std::io::Write;

use common::*;
use leadone::study::{NewStudy, NextItem, StudyError, StudyService};
use leadone::Label;
use serde_json::Value;

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

fn assert_blinded(payload: &Value, forbidden: &[&str]) {
    let allowed: BTreeSet<String> = [
        "item_id",
        "sampling_rate_hz",
        "samples_uv",
        "position",
        "total",
        "display",
    ]
    .map(String::from)
    .into();
    let got = keys(payload);
    assert!(
        got.is_subset(&allowed),
        "unexpected fields {:?}",
        got.difference(&allowed).collect::<Vec<_>>()
    );
    let display: BTreeSet<String> = ["paper_speed_mm_per_s", "gain_mm_per_mv", "sample_unit"]
        .map(String::from)
        .into();
    assert_eq!(keys(&payload["display"]), display);
    let text = payload.to_string();
    for f in forbidden {
        assert!(!text.contains(f), "payload leaks {f}");
    }
}

#[test]
fn next_item_is_blinded_and_advances() {
    let dir = tempfile::tempdir().unwrap();
    let mut svc = StudyService::open(dir.path()).unwrap();
    let created = create_toy(&mut svc, &["alice", "bob"]);
    let alice = token(&created, "alice");
    let order = svc
        .study("toy")
        .unwrap()
        .rater("alice")
        .unwrap()
        .order
        .clone();
    let forbidden = [
        "AFIB",
        "NSR",
        "OTHER",
        "toy-source",
        "toy0",
        "toy1",
        "reference",
        "label",
        "dataset",
        "record",
    ];

    let mut seen = Vec::new();
    for step in 0..4 {
        let next = svc.next_item("toy", alice).unwrap();
        let v = serde_json::to_value(&next).unwrap();
        assert_blinded(&v, &forbidden);
        let NextItem::Item(item) = next else {
            panic!("done early")
        };
        assert_eq!(item.position, step);
        assert_eq!(item.item_id, order[step]);
        assert_eq!(item.total, 4);
        assert!(!seen.contains(&item.item_id));
        seen.push(item.item_id.clone());
        let ack = svc
            .submit_annotation("toy", alice, &item.item_id, "NOT-SURE")
            .unwrap();
        assert_eq!(ack.answered, step + 1);

        // Another rater's answers never show up in alice's payloads.
        if step == 0 {
            let bob_next = svc.next_item("toy", token(&created, "bob")).unwrap();
            let NextItem::Item(b) = bob_next else {
                panic!()
            };
            svc.submit_annotation("toy", token(&created, "bob"), &b.item_id, "OTHER")
                .unwrap();
        }
    }
    let done = serde_json::to_value(svc.next_item("toy", alice).unwrap()).unwrap();
    assert_eq!(done["done"], Value::Bool(true));
}

#[test]
fn orders_are_distinct_permutations_of_the_same_items() {
    let dir = tempfile::tempdir().unwrap();
    let mut svc = StudyService::open(dir.path()).unwrap();
    let items: Vec<_> = (0..40).flat_map(|_| toy_items()).collect();
    svc.create_study(NewStudy {
        study_id: Some("big".into()),
        seed: 3,
        raters: vec!["c1".into(), "c2".into(), "c3".into()],
        items,
    })
    .unwrap();
    let study = svc.study("big").unwrap();
    let orders: Vec<Vec<String>> = ["c1", "c2", "c3"]
        .iter()
        .map(|r| study.rater(r).unwrap().order.clone())
        .collect();
    let sorted = |o: &Vec<String>| {
        let mut o = o.clone();
        o.sort();
        o
    };
    assert_eq!(sorted(&orders[0]), sorted(&orders[1]));
    assert_eq!(sorted(&orders[1]), sorted(&orders[2]));
    assert_ne!(orders[0], orders[1]);
    assert_ne!(orders[1], orders[2]);
    assert_eq!(orders[0].len(), 160);
}

#[test]
fn creation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut svc = StudyService::open(dir.path()).unwrap();
    let new = |raters: &[&str], items| NewStudy {
        study_id: None,
        seed: 0,
        raters: raters.iter().map(|r| r.to_string()).collect(),
        items,
    };
    assert!(matches!(
        svc.create_study(new(&["a"], vec![])),
        Err(StudyError::Argument(_))
    ));
    assert!(matches!(
        svc.create_study(new(&[], toy_items())),
        Err(StudyError::Argument(_))
    ));
    assert!(matches!(
        svc.create_study(new(&["a", "a"], toy_items())),
        Err(StudyError::Argument(_))
    ));
    let mut noisy = toy_items();
    noisy[0].reference_label = Label::Noise;
    assert!(matches!(
        svc.create_study(new(&["a"], noisy)),
        Err(StudyError::Argument(_))
    ));

    let one = svc
        .create_study(new(&["solo"], toy_items()[..1].to_vec()))
        .unwrap();
    assert_eq!(
        svc.study(&one.study_id)
            .unwrap()
            .rater("solo")
            .unwrap()
            .order
            .len(),
        1
    );
    create_toy(&mut svc, &["a"]);
    assert!(matches!(
        svc.create_study(NewStudy {
            study_id: Some("toy".into()),
            ..new(&["a"], toy_items())
        }),
        Err(StudyError::Conflict(_))
    ));
}

#[test]
fn submission_rules() {
    let dir = tempfile::tempdir().unwrap();
    let mut svc = StudyService::open(dir.path()).unwrap();
    let created = create_toy(&mut svc, &["alice"]);
    let t = token(&created, "alice");
    let item = item_of(&svc, "toy", 0);
    svc.submit_annotation("toy", t, &item, "AFIB").unwrap();
    assert!(matches!(
        svc.submit_annotation("toy", t, &item, "AFIB"),
        Err(StudyError::Conflict(_))
    ));
    assert!(matches!(
        svc.submit_annotation("toy", t, &item_of(&svc, "toy", 1), "MAYBE"),
        Err(StudyError::Argument(_))
    ));
    // NOISE is a model class, not a rater choice.
    assert!(matches!(
        svc.submit_annotation("toy", t, &item_of(&svc, "toy", 1), "NOISE"),
        Err(StudyError::Argument(_))
    ));
    assert!(matches!(
        svc.submit_annotation("toy", t, "item-9999", "AFIB"),
        Err(StudyError::NotFound(_))
    ));
    assert!(matches!(
        svc.submit_annotation("toy", "nope", &item, "AFIB"),
        Err(StudyError::Auth(_))
    ));
    assert!(matches!(
        svc.next_item("toy", "nope"),
        Err(StudyError::Auth(_))
    ));
    assert!(matches!(
        svc.next_item("missing", t),
        Err(StudyError::NotFound(_))
    ));

    // Unlock needs the admin token, then the rater may answer again.
    assert!(matches!(
        svc.unlock("toy", t, "alice", &item, "typo"),
        Err(StudyError::Auth(_))
    ));
    svc.unlock("toy", &created.admin_token, "alice", &item, "typo")
        .unwrap();
    svc.submit_annotation("toy", t, &item, "NSR").unwrap();
    assert_eq!(
        svc.study("toy")
            .unwrap()
            .annotation("alice", &item)
            .unwrap()
            .label,
        Label::Nsr
    );
    assert_eq!(svc.study("toy").unwrap().unlocks.len(), 1);
}

#[test]
fn replay_matches_memory_after_every_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let mut svc = StudyService::open(dir.path()).unwrap();
    let created = create_toy(&mut svc, &["alice", "bob"]);
    let mut steps: Vec<(&str, usize, &str)> = Vec::new();
    for i in 0..4 {
        steps.push(("alice", i, ALICE[i]));
        steps.push(("bob", i, BOB[i]));
    }
    for (rater, i, label) in steps {
        let item = item_of(&svc, "toy", i);
        svc.submit_annotation("toy", token(&created, rater), &item, label)
            .unwrap();
        let reopened = StudyService::open(dir.path()).unwrap();
        assert_eq!(reopened.study("toy").unwrap(), svc.study("toy").unwrap());
    }
    svc.run_model("toy", &created.admin_token, &uniform_model())
        .unwrap();
    let reopened = StudyService::open(dir.path()).unwrap();
    assert_eq!(reopened.study("toy").unwrap(), svc.study("toy").unwrap());
}

#[test]
fn torn_write_is_dropped_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let mut svc = StudyService::open(dir.path()).unwrap();
    let created = create_toy(&mut svc, &["alice"]);
    answer_all(&mut svc, &created, "alice", &ALICE);
    let path = svc.log_path("toy").unwrap();
    drop(svc);
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .open(&path)
        .unwrap();
    f.write_all(b"{\"seq\":5,\"kind\":\"annotation\",\"payl")
        .unwrap();
    drop(f);
    let svc = StudyService::open(dir.path()).unwrap();
    assert_eq!(svc.study("toy").unwrap().answered("alice"), 4);
}

#[test]
fn model_run_records_every_item_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let mut svc = StudyService::open(dir.path()).unwrap();
    let created = create_toy(&mut svc, &["alice"]);
    let model = uniform_model();
    assert!(matches!(
        svc.run_model("toy", "nope", &model),
        Err(StudyError::Auth(_))
    ));
    let a = svc.run_model("toy", &created.admin_token, &model).unwrap();
    let b = svc.run_model("toy", &created.admin_token, &model).unwrap();
    assert_eq!(a.predicted, 4);
    assert!(a.failures.is_empty());
    let runs = &svc.study("toy").unwrap().model_runs;
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0].results, runs[1].results);
    assert_ne!(a.run_id, b.run_id);
    for r in &runs[0].results {
        assert_eq!(r.probabilities, [0.25; 4]);
        assert_eq!(r.label, Label::Nsr);
    }

    // A model that cannot run in eval mode fails item by item, and the run is still recorded.
    let mut untrained = uniform_model();
    untrained.stats_updates = 0;
    let c = svc
        .run_model("toy", &created.admin_token, &untrained)
        .unwrap();
    assert_eq!(c.predicted, 0);
    assert_eq!(c.failures.len(), 4);
    assert_eq!(c.failures[0].stage, "forward");
}

#[test]
fn single_perfect_rater() {
    let dir = tempfile::tempdir().unwrap();
    let mut svc = StudyService::open(dir.path()).unwrap();
    let created = create_toy(&mut svc, &["alice", "late"]);
    assert!(matches!(
        svc.report("toy", &created.admin_token),
        Err(StudyError::EmptyReport)
    ));
    answer_all(
        &mut svc,
        &created,
        "alice",
        &["AFIB", "AFIB", "NSR", "OTHER"],
    );
    let r = svc.report("toy", &created.admin_token).unwrap();
    assert_eq!(r.raters.len(), 1);
    let k = r.raters[0].kappa.as_ref().unwrap();
    assert_eq!(k.kappa, 1.0);
    assert_eq!(k.band.as_str(), "almost-perfect");
    assert_eq!(r.excluded_raters.len(), 1);
    assert_eq!(r.excluded_raters[0].rater_id, "late");
    assert!(r.pairwise.is_empty());
    assert!(r.model.is_none());
}
