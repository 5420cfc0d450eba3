mod common;

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::*;
use http_body_util::BodyExt;
use leadone::densenet::Params;
use leadone::study::http::{router, AppState};
use leadone::study::StudyService;
use serde_json::{json, Value};
use tower::ServiceExt;

const SERVICE_TOKEN: &str = "service-secret";

fn app(dir: &Path, model: Option<Params>) -> axum::Router {
    let service = StudyService::open(dir).unwrap();
    router(Arc::new(AppState::new(
        service,
        model,
        SERVICE_TOKEN.into(),
    )))
}

async fn call(
    app: &axum::Router,
    method: &str,
    uri: &str,
    token: Option<&str>,
    body: Option<Value>,
) -> (StatusCode, String, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let body = body.map_or(Body::empty(), |b| Body::from(b.to_string()));
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let ctype = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes)
        .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, ctype, value)
}

fn samples(seconds: f64) -> Vec<f64> {
    let items = toy_items();
    let n = (seconds * 250.0) as usize;
    items[0]
        .samples_uv
        .iter()
        .cycle()
        .take(n)
        .copied()
        .collect()
}

#[tokio::test]
async fn analyze_contract() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), Some(uniform_model()));
    let body = |s: f64| json!({"record_id": "x1", "sampling_rate_hz": 250.0, "lead": "I", "samples_uv": samples(s)});

    let (status, _, v) = call(
        &app,
        "POST",
        "/api/analyze",
        Some(SERVICE_TOKEN),
        Some(body(10.0)),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let probs = v["probabilities"].as_object().unwrap();
    let mut names: Vec<_> = probs.keys().cloned().collect();
    names.sort();
    assert_eq!(names, ["AFIB", "NOISE", "NSR", "OTHER"]);
    let total: f64 = probs.values().map(|p| p.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(v["class"], "NSR");
    assert_eq!(v["model_version"], uniform_model().model_version);

    let (status, _, v) = call(
        &app,
        "POST",
        "/api/analyze",
        Some(SERVICE_TOKEN),
        Some(body(5.0)),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("outside"));
    assert_eq!(
        call(&app, "POST", "/api/analyze", None, Some(body(10.0)))
            .await
            .0,
        StatusCode::UNAUTHORIZED
    );
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/analyze",
            Some("wrong"),
            Some(body(10.0))
        )
        .await
        .0,
        StatusCode::UNAUTHORIZED
    );

    let mut bad = body(10.0);
    bad["lead"] = json!("II");
    assert_eq!(
        call(&app, "POST", "/api/analyze", Some(SERVICE_TOKEN), Some(bad))
            .await
            .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    let schema = json!({"record_id": "x", "samples_uv": [1.0]});
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/analyze",
            Some(SERVICE_TOKEN),
            Some(schema)
        )
        .await
        .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    let extra = json!({"record_id": "x", "sampling_rate_hz": 250.0, "lead": "I", "samples_uv": samples(10.0), "label": "AFIB"});
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/analyze",
            Some(SERVICE_TOKEN),
            Some(extra)
        )
        .await
        .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
}

#[tokio::test]
async fn analyze_failures() {
    let dir = tempfile::tempdir().unwrap();
    let body = json!({"record_id": "x1", "sampling_rate_hz": 250.0, "lead": "I", "samples_uv": samples(12.0)});
    let no_model = app(dir.path(), None);
    let (status, _, _) = call(
        &no_model,
        "POST",
        "/api/analyze",
        Some(SERVICE_TOKEN),
        Some(body.clone()),
    )
    .await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    let mut broken = uniform_model();
    broken.stats_updates = 0;
    let app = app(dir.path(), Some(broken));
    let (status, _, v) = call(
        &app,
        "POST",
        "/api/analyze",
        Some(SERVICE_TOKEN),
        Some(body),
    )
    .await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    let msg = v["error"].as_str().unwrap();
    let incident = msg.rsplit(' ').next().unwrap();
    assert!(uuid::Uuid::parse_str(incident).is_ok(), "{msg}");
}

#[tokio::test]
async fn study_lifecycle_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_toy_manifest(&dir.path().join("corpus"));
    let app = app(&dir.path().join("data"), Some(uniform_model()));

    let create = json!({"manifest_path": manifest, "raters": ["alice", "bob"], "seed": 11, "study_id": "toy"});
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/studies",
            Some("wrong"),
            Some(create.clone())
        )
        .await
        .0,
        StatusCode::UNAUTHORIZED
    );
    let (status, _, created) = call(
        &app,
        "POST",
        "/api/studies",
        Some(SERVICE_TOKEN),
        Some(create.clone()),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(created["items"], 4);
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/studies",
            Some(SERVICE_TOKEN),
            Some(create)
        )
        .await
        .0,
        StatusCode::CONFLICT
    );
    let bad_manifest = json!({"manifest_path": "/nonexistent.csv", "raters": ["a"]});
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/studies",
            Some(SERVICE_TOKEN),
            Some(bad_manifest)
        )
        .await
        .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );

    let admin = created["admin_token"].as_str().unwrap().to_string();
    let alice = created["raters"][0]["token"].as_str().unwrap().to_string();

    let (status, _, next) = call(&app, "GET", "/api/studies/toy/next", Some(&alice), None).await;
    assert_eq!(status, StatusCode::OK);
    let text = next.to_string();
    for leak in [
        "AFIB",
        "NSR",
        "OTHER",
        "toy0",
        "toy-source",
        "corpus",
        "reference",
    ] {
        assert!(!text.contains(leak), "{leak} leaked");
    }
    assert_eq!(next["position"], 0);
    let item = next["item_id"].as_str().unwrap().to_string();

    let post = |label: &str| json!({"item_id": item, "label": label});
    let (status, _, ack) = call(
        &app,
        "POST",
        "/api/studies/toy/annotations",
        Some(&alice),
        Some(post("AFIB")),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["answered"], 1);
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/studies/toy/annotations",
            Some(&alice),
            Some(post("NSR"))
        )
        .await
        .0,
        StatusCode::CONFLICT
    );
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/studies/toy/annotations",
            Some("x"),
            Some(post("NSR"))
        )
        .await
        .0,
        StatusCode::UNAUTHORIZED
    );
    let missing = json!({"item_id": "item-9999", "label": "NSR"});
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/studies/toy/annotations",
            Some(&alice),
            Some(missing)
        )
        .await
        .0,
        StatusCode::NOT_FOUND
    );
    let (_, _, next) = call(&app, "GET", "/api/studies/toy/next", Some(&alice), None).await;
    let maybe = json!({"item_id": next["item_id"], "label": "MAYBE"});
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/studies/toy/annotations",
            Some(&alice),
            Some(maybe)
        )
        .await
        .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        call(&app, "GET", "/api/studies/nope/next", Some(&alice), None)
            .await
            .0,
        StatusCode::NOT_FOUND
    );

    let unlock = json!({"rater_id": "alice", "item_id": item, "reason": "misclick"});
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/studies/toy/unlock",
            Some(&alice),
            Some(unlock.clone())
        )
        .await
        .0,
        StatusCode::UNAUTHORIZED
    );
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/studies/toy/unlock",
            Some(&admin),
            Some(unlock)
        )
        .await
        .0,
        StatusCode::OK
    );
    assert_eq!(
        call(&app, "GET", "/api/studies/toy/next", Some(&alice), None)
            .await
            .2["item_id"],
        json!(item)
    );

    assert_eq!(
        call(&app, "GET", "/api/studies/toy/report", Some(&admin), None)
            .await
            .0,
        StatusCode::CONFLICT
    );
    assert_eq!(
        call(
            &app,
            "POST",
            "/api/studies/toy/model-run",
            Some(&alice),
            None
        )
        .await
        .0,
        StatusCode::UNAUTHORIZED
    );
    let (status, _, run) = call(
        &app,
        "POST",
        "/api/studies/toy/model-run",
        Some(&admin),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(run["predicted"], 4);

    assert_eq!(
        call(&app, "GET", "/api/studies/toy/report", Some(&alice), None)
            .await
            .0,
        StatusCode::UNAUTHORIZED
    );
    let (status, _, report) =
        call(&app, "GET", "/api/studies/toy/report", Some(&admin), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["excluded_raters"].as_array().unwrap().len(), 2);
    let (status, ctype, md) = call(
        &app,
        "GET",
        "/api/studies/toy/report?format=markdown",
        Some(&admin),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!(ctype.starts_with("text/markdown"));
    assert!(md.as_str().unwrap().contains("## Table III"));
    assert_eq!(
        call(
            &app,
            "GET",
            "/api/studies/toy/report?format=pdf",
            Some(&admin),
            None
        )
        .await
        .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
}
