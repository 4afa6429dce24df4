use std::path::PathBuf;
use std::time::Duration;

use abpipe_core::control::Controller;
use abpipe_core::feedback::LoopConfig;
use abpipe_server::{app, AppState};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn specs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn server() -> Router {
    let controller = Controller::in_memory(LoopConfig::default());
    app(AppState { controller, specs_dir: Some(specs_dir()) })
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(b) => builder.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => builder.body(Body::empty()),
    }
    .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn loaded() -> Router {
    let app = server();
    let (status, report) = call(&app, Method::POST, "/catalogs/load", None).await;
    assert_eq!(status, StatusCode::OK, "{report}");
    app
}

async fn wait_terminal(app: &Router, run: &str) -> Value {
    for _ in 0..600 {
        let (_, status) = call(app, Method::GET, &format!("/runs/{run}/status"), None).await;
        if !["loaded", "running"].contains(&status["run"]["status"].as_str().unwrap()) {
            return status;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("run {run} did not finish");
}

#[tokio::test]
async fn catalog_endpoints() {
    let app = server();
    let (_, report) = call(&app, Method::GET, "/catalogs/report", None).await;
    assert_eq!(report["documentsLoaded"], 0);
    let (status, report) = call(&app, Method::POST, "/catalogs/load", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["documentsLoaded"], 12);
    assert_eq!(report["errors"], json!([]));
    let (_, pipelines) = call(&app, Method::GET, "/pipelines", None).await;
    let ids: Vec<&str> = pipelines.as_array().unwrap().iter().map(|p| p["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["S1", "S2"]);
    assert_eq!(pipelines[0]["edges"].as_array().unwrap().len(), 4);

    let (status, body) =
        call(&app, Method::POST, "/catalogs/load", Some(json!({ "directory": "/definitely/missing" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].is_string());
}

#[tokio::test]
async fn run_to_completion_over_http() {
    let app = loaded().await;
    let (status, created) = call(&app, Method::POST, "/runs", Some(json!({ "pipelineId": "S1", "seed": 1 }))).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    let run = created["runId"].as_str().unwrap().to_string();

    let (status, body) = call(&app, Method::POST, "/runs", Some(json!({ "pipelineId": "S2" }))).await;
    let finished_already = status == StatusCode::CREATED;
    if !finished_already {
        assert_eq!(status, StatusCode::CONFLICT, "{body}");
    }

    let final_status = wait_terminal(&app, &run).await;
    assert_eq!(final_status["run"]["status"], "ended");
    let (_, results) = call(&app, Method::GET, &format!("/runs/{run}/results"), None).await;
    assert_eq!(results["completed"], true);
    assert_eq!(
        results["path"],
        json!(["Upgrade v1.0.0 - v1.1.0", "Clicks v1.0.0 - v1.1.0", "Purchases v1.0.0 - v1.1.0", "end"])
    );
    assert_eq!(results["experiments"][0]["outcome"]["decision"], "inconclusive");
    assert_eq!(results["experiments"][0]["firedRule"], "Performance OK");

    let (_, summary) = call(&app, Method::GET, &format!("/runs/{run}/summary"), None).await;
    assert_eq!(summary["runId"], run);
    let (_, runs) = call(&app, Method::GET, "/runs", None).await;
    assert!(!runs.as_array().unwrap().is_empty());

    let (status, _) = call(&app, Method::POST, &format!("/runs/{run}/abort"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn live_summary_and_abort() {
    let app = loaded().await;
    let (_, created) = call(
        &app,
        Method::POST,
        "/runs",
        Some(json!({ "pipelineId": "S1", "seed": 2, "clock": "realtime", "timeScale": 200.0 })),
    )
    .await;
    let run = created["runId"].as_str().unwrap().to_string();
    let mut counts = Vec::new();
    for _ in 0..40 {
        let (status, summary) = call(&app, Method::GET, &format!("/runs/{run}/summary"), None).await;
        assert_eq!(status, StatusCode::OK);
        if let Some(a) = summary["perVariant"]["ResponseTime_A"].as_object() {
            counts.push(a["count"].as_u64().unwrap());
            for key in ["mean", "min", "q1", "median", "q3", "max", "whiskerLow", "whiskerHigh"] {
                assert!(a[key].is_number(), "{key}");
            }
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    assert!(counts.len() > 2);
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    let (_, partial) = call(&app, Method::GET, &format!("/runs/{run}/results"), None).await;
    assert_eq!(partial["completed"], false);

    let (status, record) = call(&app, Method::POST, &format!("/runs/{run}/abort"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(record["status"], "aborted");
    let (status, _) = call(&app, Method::POST, &format!("/runs/{run}/abort"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn run_errors() {
    let app = loaded().await;
    let (status, body) = call(&app, Method::POST, "/runs", Some(json!({ "pipelineId": "Nope" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "unknown pipeline: Nope");
    let (status, _) = call(&app, Method::GET, "/runs/run-4242/status", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(
        &app,
        Method::POST,
        "/runs",
        Some(json!({ "pipelineId": "S1", "clock": "realtime", "timeScale": -1.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = call(&app, Method::POST, "/runs", Some(json!({ "pipelineId": "S1", "bogus": 1 }))).await;
    assert!(status.is_client_error());
    assert!(body["error"].as_str().unwrap().contains("bogus"), "{body}");
    let (status, body) = call(&app, Method::GET, "/probe/recommendation-ab/history/A?since=x", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].is_string());
}

#[tokio::test]
async fn probe_effector_and_store() {
    let app = loaded().await;
    let (status, body) = call(&app, Method::POST, "/store/purchase", Some(json!({ "clientId": "u1" }))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{body}");
    assert_eq!(body["error"], "no active setup");

    let (status, _) = call(&app, Method::POST, "/effector/setup/Recommendation_upgrade/deploy", None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&app, Method::POST, "/effector/setup/Recommendation_upgrade/deploy", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, Method::POST, "/effector/setup/Unknown/deploy", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) =
        call(&app, Method::POST, "/effector/recommendation-ab/routing", Some(json!({ "a": 100, "b": 0 }))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) =
        call(&app, Method::POST, "/effector/recommendation-ab/routing", Some(json!({ "a": 60, "b": 50 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    for i in 0..5 {
        let (status, response) =
            call(&app, Method::POST, "/store/purchase", Some(json!({ "clientId": format!("u{i}") }))).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(response["variant"], "A");
        assert_eq!(response["abName"], "recommendation-ab");
    }
    let (status, history) = call(&app, Method::GET, "/probe/recommendation-ab/history/A", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(history.as_array().unwrap().len(), 5);
    let (_, tail) = call(&app, Method::GET, "/probe/recommendation-ab/history/A?since=3", None).await;
    assert_eq!(tail.as_array().unwrap().len(), 2);
    assert_eq!(tail[0], history[3]);
    let (_, b) = call(&app, Method::GET, "/probe/recommendation-ab/history/B", None).await;
    assert_eq!(b, json!([]));
    let (status, _) = call(&app, Method::GET, "/probe/recommendation-ab/history/C", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::GET, "/probe/other-ab/history/A", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = call(&app, Method::POST, "/effector/recommendation-ab/clear", None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, history) = call(&app, Method::GET, "/probe/recommendation-ab/history/A", None).await;
    assert_eq!(history, json!([]));

    let (status, _) = call(&app, Method::POST, "/effector/setup/Recommendation_upgrade/remove", None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&app, Method::POST, "/effector/setup/Recommendation_upgrade/remove", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}
