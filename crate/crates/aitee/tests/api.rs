use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use aitee::api::router;
use aitee::{Config, Engine};
use aitee_core::gnn::load_model;
use aitee_core::knowledge_base::{load_kb, load_or_build_index};
use aitee_core::netlist::{SERIES_EXAMPLE_NETLIST, SEVEN_COMPONENT_NETLIST};
use aitee_core::reconstruct::detections_to_jsonl;
use aitee_core::scene::{render, series4};
use aitee_core::tutor::backend::{EchoHashBackend, FnBackend};
use aitee_core::tutor::LlmBackend;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn engine_with(data: &Path, backend: Arc<dyn LlmBackend>) -> Arc<Engine> {
    let config = Config {
        model: repo().join("models/reference.gnn"),
        kb_dir: repo().join("kb"),
        data_dir: data.to_path_buf(),
        ..Config::default()
    };
    let model = load_model(&std::fs::read(&config.model).unwrap()).unwrap();
    let kb = load_or_build_index(&config.kb_dir, &load_kb(&config.kb_dir).unwrap(), &model).unwrap();
    Arc::new(Engine::new(config, model, kb, backend).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn raw(app: &Router, uri: &str) -> Vec<u8> {
    let req = Request::builder().uri(uri).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    resp.into_body().collect().await.unwrap().to_bytes().to_vec()
}

#[tokio::test]
async fn series_example_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(engine_with(tmp.path(), Arc::new(EchoHashBackend::default())));
    let (status, body) = call(&app, "POST", "/circuits", Some(json!({ "netlist": SERIES_EXAMPLE_NETLIST }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let canonical = body["netlist"].as_str().unwrap();
    assert_eq!(canonical.lines().count(), 5);
    let id = body["circuit_id"].as_str().unwrap().to_string();

    let (status, sim) = call(&app, "GET", &format!("/circuits/{id}/simulate"), None).await;
    assert_eq!(status, StatusCode::OK);
    let r = sim["result"]["total_resistance"].as_f64().unwrap();
    assert!((r - 1260.0).abs() < 1e-9 * 1260.0);

    let (status, emb) = call(&app, "GET", &format!("/circuits/{id}/embedding"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(emb["values"].as_array().unwrap().len(), 11);

    let (status, similar) = call(&app, "GET", &format!("/circuits/{id}/similar?k=3"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(similar["units"].as_array().unwrap().len(), 3);
    let (status, err) = call(&app, "GET", &format!("/circuits/{id}/similar?k=abc"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(err["code"].is_string());
}

#[tokio::test]
async fn valueless_circuit_cannot_be_simulated() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(engine_with(tmp.path(), Arc::new(EchoHashBackend::default())));
    let (status, body) = call(&app, "POST", "/circuits", Some(json!({ "netlist": SEVEN_COMPONENT_NETLIST }))).await;
    assert_eq!(status, StatusCode::OK);
    let id = body["circuit_id"].as_str().unwrap();
    let (status, err) = call(&app, "GET", &format!("/circuits/{id}/simulate"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "simulate.missing_values");
}

#[tokio::test]
async fn error_responses_are_structured() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(engine_with(tmp.path(), Arc::new(EchoHashBackend::default())));
    let (status, err) = call(&app, "POST", "/circuits", Some(json!({ "netlist": "V1 A B 5V\nR1 A\n" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "netlist.malformed_line");
    assert!(err["message"].as_str().unwrap().contains("line 2"));

    let (status, err) = call(&app, "GET", "/circuits/ffff/embedding", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "unknown_circuit");

    let (status, _) = call(&app, "POST", "/sessions", Some(json!({ "wrong": 1 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, err) = call(&app, "GET", "/no/such/route", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");
}

#[tokio::test]
async fn scene_upload_reconstructs_series_example() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(engine_with(tmp.path(), Arc::new(EchoHashBackend::default())));
    let scene = render(&series4());
    let boundary = "aiteeboundary";
    let mut body = Vec::new();
    body.extend_from_slice(
        format!("--{boundary}\r\nContent-Disposition: form-data; name=\"detections\"\r\n\r\n").as_bytes(),
    );
    body.extend_from_slice(detections_to_jsonl(&scene.detections).as_bytes());
    body.extend_from_slice(
        format!(
            "\r\n--{boundary}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"s.pgm\"\r\n\
             Content-Type: image/x-portable-graymap\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(&scene.image.to_pgm());
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let req = Request::builder()
        .method("POST")
        .uri("/circuits")
        .header("content-type", format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let v: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    let reference = aitee_core::parse_netlist(SERIES_EXAMPLE_NETLIST).unwrap();
    let got = aitee_core::parse_netlist(v["netlist"].as_str().unwrap()).unwrap();
    assert!(aitee_core::netlist::structurally_equal(&got, &reference));
}

#[tokio::test]
async fn pure_endpoints_repeat_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(engine_with(tmp.path(), Arc::new(EchoHashBackend::default())));
    let (_, body) = call(&app, "POST", "/circuits", Some(json!({ "netlist": SERIES_EXAMPLE_NETLIST }))).await;
    let id = body["circuit_id"].as_str().unwrap();
    for path in ["embedding", "similar?k=8", "simulate?superposition=true"] {
        let uri = format!("/circuits/{id}/{path}");
        assert_eq!(raw(&app, &uri).await, raw(&app, &uri).await, "{uri}");
    }
}

#[tokio::test]
async fn session_lifecycle_and_restart() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(engine_with(tmp.path(), Arc::new(EchoHashBackend::default())));
    let (_, body) = call(&app, "POST", "/circuits", Some(json!({ "netlist": SERIES_EXAMPLE_NETLIST }))).await;
    let cid = body["circuit_id"].as_str().unwrap().to_string();
    let (status, created) = call(&app, "POST", "/sessions", Some(json!({ "circuit_id": cid }))).await;
    assert_eq!(status, StatusCode::OK, "{created}");
    let sid = created["session_id"].as_str().unwrap().to_string();
    assert_eq!(created["retrieved"][0], "series-single");

    let (status, reply) = call(&app, "POST", &format!("/sessions/{sid}/messages"), Some(json!({ "text": "Where do I start?" }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(reply["turn_count"], 2);
    let (status, err) = call(&app, "POST", &format!("/sessions/{sid}/messages"), Some(json!({ "text": "  " }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{err}");

    let app2 = router(engine_with(tmp.path(), Arc::new(EchoHashBackend::default())));
    let (status, view) = call(&app2, "GET", &format!("/sessions/{sid}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["turns"].as_array().unwrap().len(), 2);
    assert_eq!(view["circuit_id"], cid);
    let (status, health) = call(&app2, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["sessions"], 1);
    assert_eq!(health["units"], 8);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_messages_on_one_session_conflict() {
    let tmp = tempfile::tempdir().unwrap();
    let slow = FnBackend::new("slow", |_, _| {
        std::thread::sleep(Duration::from_millis(400));
        Ok("What do you notice about the current?".into())
    });
    let app = router(engine_with(tmp.path(), Arc::new(slow)));
    let (_, body) = call(&app, "POST", "/circuits", Some(json!({ "netlist": SERIES_EXAMPLE_NETLIST }))).await;
    let cid = body["circuit_id"].as_str().unwrap().to_string();
    let (_, created) = call(&app, "POST", "/sessions", Some(json!({ "circuit_id": cid }))).await;
    let uri = format!("/sessions/{}/messages", created["session_id"].as_str().unwrap());
    let (a, b) = tokio::join!(
        call(&app, "POST", &uri, Some(json!({ "text": "first" }))),
        call(&app, "POST", &uri, Some(json!({ "text": "second" }))),
    );
    let mut statuses = [a.0.as_u16(), b.0.as_u16()];
    statuses.sort();
    assert_eq!(statuses, [200, 409]);
    let conflict = if a.0 == StatusCode::CONFLICT { a.1 } else { b.1 };
    assert_eq!(conflict["code"], "session_busy");
}

#[tokio::test]
async fn backend_failure_maps_to_bad_gateway() {
    let tmp = tempfile::tempdir().unwrap();
    let down = FnBackend::new("down", |_, _| {
        Err(aitee_core::tutor::BackendError::Unavailable("connection refused".into()))
    });
    let app = router(engine_with(tmp.path(), Arc::new(down)));
    let (_, body) = call(&app, "POST", "/circuits", Some(json!({ "netlist": SERIES_EXAMPLE_NETLIST }))).await;
    let cid = body["circuit_id"].as_str().unwrap().to_string();
    let (status, err) = call(&app, "POST", "/sessions", Some(json!({ "circuit_id": cid }))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(err["code"], "backend.unavailable");
}

#[tokio::test]
async fn ui_directory_is_served_as_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let ui = tmp.path().join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<p>ui</p>").unwrap();
    let mut config = Config {
        model: repo().join("models/reference.gnn"),
        kb_dir: repo().join("kb"),
        data_dir: tmp.path().join("sessions"),
        ..Config::default()
    };
    config.ui_dir = Some(ui);
    let engine = Arc::new(Engine::from_config(config).unwrap());
    let app = router(engine);
    assert_eq!(raw(&app, "/index.html").await, b"<p>ui</p>");
    let (status, _) = call(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
}
