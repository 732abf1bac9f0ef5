use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use roadchat::api::router;
use roadchat::engine::{Engine, EngineConfig};
use roadchat::session::Service;
use roadchat::store::RunStore;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(root: &std::path::Path) -> Router {
    let engine = Engine::new(EngineConfig {
        duration: 600.0,
        overpass_url: None,
        ..EngineConfig::default()
    });
    router(Arc::new(Service::new(RunStore::open(root).unwrap(), engine)))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test(flavor = "multi_thread")]
async fn full_conversation_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());

    let (status, v) = call_json(&app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    let sid = v["session_id"].as_str().unwrap().to_string();

    let turn = |text: &str| json!({ "text": text });
    let (status, v) = call_json(
        &app,
        "POST",
        &format!("/sessions/{sid}/turns"),
        Some(turn("Generate a 4 by 4 grid network with light traffic")),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let first = v["run"]["run_id"].as_u64().unwrap();
    assert_eq!(v["intent"]["kind"], "generate_abstract");

    let (_, v) = call_json(
        &app,
        "POST",
        &format!("/sessions/{sid}/turns"),
        Some(turn("Adapt the traffic lights to the demand")),
    )
    .await;
    let second = v["run"]["run_id"].as_u64().unwrap();
    assert_eq!(v["run"]["parent"].as_u64(), Some(first));

    let (status, v) = call_json(&app, "GET", "/runs", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 2);

    let (status, v) = call_json(&app, "GET", &format!("/runs/{second}/metrics"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(v["avg_travel_time"].as_f64().unwrap() > 0.0);

    for kind in ["net", "rou", "add", "sumocfg", "edgedata"] {
        let (status, bytes) = call(&app, "GET", &format!("/runs/{second}/files/{kind}"), None).await;
        assert_eq!(status, StatusCode::OK, "{kind}");
        assert!(bytes.starts_with(b"<?xml") || bytes.starts_with(b"<"), "{kind}");
    }

    let (status, v) = call_json(
        &app,
        "POST",
        "/compare",
        Some(json!({ "run_a": first, "run_b": second })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["metrics"].as_array().unwrap().len(), 7);
    assert!(v["summary"].as_str().unwrap().contains("travel time"));

    let (status, v) = call_json(&app, "GET", &format!("/sessions/{sid}/history"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["turns"].as_array().unwrap().len(), 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());

    let (status, v) = call_json(&app, "GET", "/runs/99", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(v["error"].is_string());

    let (status, _) = call_json(&app, "GET", "/sessions/s404/history", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = call_json(&app, "POST", "/sessions/s404/turns", Some(json!({ "text": "hi" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, v) = call_json(&app, "POST", "/sessions", None).await;
    let sid = v["session_id"].as_str().unwrap().to_string();
    call_json(
        &app,
        "POST",
        &format!("/sessions/{sid}/turns"),
        Some(json!({ "text": "Generate a 4 by 4 grid network" })),
    )
    .await;
    let (status, v) = call_json(&app, "GET", "/runs/1/files/shapefile", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("shapefile"));

    // a failed turn is still a 200 with the error in the body
    let (status, v) = call_json(
        &app,
        "POST",
        &format!("/sessions/{sid}/turns"),
        Some(json!({ "text": "I want to remove Nowhere Boulevard" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!(v["error"].is_string());
    assert!(v["run"].is_null());

    let (status, _) = call(&app, "POST", "/compare", Some(json!({ "run_a": 1 }))).await;
    assert!(status.is_client_error());
}
