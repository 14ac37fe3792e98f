use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use futures::StreamExt;
use serde_json::{json, Value};
use tm_lmc::session::SessionConfig;
use tm_lmc_cli::{router, AppState};
use tower::ServiceExt;

const SAMPLE: &str = "IN\nSTO A\nIN\nADD A\nOUT\nHLT\nA DAT\n";

fn app(cap: usize) -> Router {
    router(AppState::new(SessionConfig { cap, ..SessionConfig::default() }))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, v)
}

async fn session(app: &Router) -> String {
    let (s, v) = call(app, Method::POST, "/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn create_and_cap() {
    let app = app(2);
    let a = session(&app).await;
    let b = session(&app).await;
    assert_ne!(a, b);
    assert_eq!(a.len(), 32);
    let resp = app.clone().oneshot(Request::post("/sessions").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::TOO_MANY_REQUESTS);
    assert!(resp.headers().contains_key(header::RETRY_AFTER));

    let (s, v) = call(&app, Method::GET, &format!("/sessions/{a}/state"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["mode"], "idle");
    assert_eq!(v["state"]["pc"], 0);
    assert_eq!(v["state"]["mailboxes"].as_array().unwrap().len(), 100);
    assert_eq!(call(&app, Method::GET, "/sessions/nope/state", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn interactive_sample_over_http() {
    let app = app(4);
    let id = session(&app).await;
    let (s, v) = call(&app, Method::POST, &format!("/sessions/{id}/load"), Some(json!({"source": SAMPLE}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!({"cells": 7, "symbols": {"A": 6}}));

    let (_, v) = call(&app, Method::POST, &format!("/sessions/{id}/step"), None).await;
    assert_eq!(v["mode"], "awaiting_input");

    let (s, _) = call(&app, Method::POST, &format!("/sessions/{id}/input"), Some(json!({"value": 1000}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, Method::POST, &format!("/sessions/{id}/input"), Some(json!({"value": 5}))).await;
    assert_eq!(s, StatusCode::NO_CONTENT);

    let (_, v) = call(&app, Method::POST, &format!("/sessions/{id}/step"), None).await;
    assert_eq!(v["mode"], "idle");
    assert_eq!(v["delta"]["value"], 5);
    let events: Vec<&str> = v["occurrences"].as_array().unwrap().iter().map(|o| o["event"].as_str().unwrap()).collect();
    for e in ["E16", "E29", "E31"] {
        assert!(events.contains(&e), "{e} missing");
    }

    call(&app, Method::POST, &format!("/sessions/{id}/input"), Some(json!({"value": 7}))).await;
    let (s, v) = call(&app, Method::POST, &format!("/sessions/{id}/run"), Some(json!({"max_steps": 100}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["mode"], "halted");

    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(v["state"]["output"], json!([12]));
    assert_eq!(v["state"]["halted"], true);

    let (s, v) = call(&app, Method::POST, &format!("/sessions/{id}/step"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "session halted");
}

#[tokio::test]
async fn load_errors() {
    let app = app(4);
    let id = session(&app).await;
    let uri = format!("/sessions/{id}/load");
    let (s, v) = call(&app, Method::POST, &uri, Some(json!({"source": "HLT\nJMP 5\n"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["diagnostics"][0]["line"], 2);
    let (s, _) = call(&app, Method::POST, &uri, Some(json!({"image": [1000]}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, Method::POST, &uri, Some(json!({}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = call(&app, Method::POST, &uri, Some(json!({"image": [901, 902, 0]}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["cells"], 3);
}

#[tokio::test]
async fn run_limits() {
    let app = app(4);
    let id = session(&app).await;
    let (_, v) = call(&app, Method::POST, &format!("/sessions/{id}/run"), None).await;
    assert_eq!(v["mode"], "halted");
    assert_eq!(v["steps"], 1);

    let id = session(&app).await;
    call(&app, Method::POST, &format!("/sessions/{id}/load"), Some(json!({"source": "L BRA L"}))).await;
    let (_, v) = call(&app, Method::POST, &format!("/sessions/{id}/run"), Some(json!({"max_steps": 20}))).await;
    assert_eq!(v["mode"], "idle");
    assert_eq!(v["steps_exhausted"], true);
    assert_eq!(v["steps"], 20);
}

#[tokio::test]
async fn exports() {
    let app = app(4);
    let id = session(&app).await;
    let (s, v) = call(&app, Method::GET, &format!("/sessions/{id}/export/events"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 32);
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}/export/behavior"), None).await;
    assert_eq!(v["nodes"].as_array().unwrap().len(), 32);
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}/export/static"), None).await;
    assert!(!v["stages"].as_array().unwrap().is_empty());

    let resp = app
        .clone()
        .oneshot(Request::get(format!("/sessions/{id}/export/static?format=dot")).body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "text/vnd.graphviz");
    let dot = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    assert!(String::from_utf8_lossy(&dot).contains("style=dashed"));

    let (s, _) = call(&app, Method::GET, &format!("/sessions/{id}/export/nothing"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, Method::GET, &format!("/sessions/{id}/export/static?format=svg"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, Method::GET, "/sessions/nope/export/static", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

/// Parses `event:`/`data:` pairs out of raw SSE text.
fn sse_messages(text: &str) -> Vec<(String, Value)> {
    text.split("\n\n")
        .filter_map(|block| {
            let mut name = None;
            let mut data = None;
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    name = Some(v.trim().to_string());
                } else if let Some(v) = line.strip_prefix("data:") {
                    data = serde_json::from_str(v.trim()).ok();
                }
            }
            Some((name?, data?))
        })
        .collect()
}

#[tokio::test]
async fn push_stream_carries_ordered_deltas() {
    let app = app(4);
    let id = session(&app).await;
    let resp =
        app.clone().oneshot(Request::get(format!("/sessions/{id}/events")).body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "text/event-stream");
    let mut body = resp.into_body().into_data_stream();

    call(&app, Method::POST, &format!("/sessions/{id}/load"), Some(json!({"source": SAMPLE}))).await;
    call(&app, Method::POST, &format!("/sessions/{id}/input"), Some(json!({"value": 5}))).await;
    call(&app, Method::POST, &format!("/sessions/{id}/input"), Some(json!({"value": 7}))).await;
    call(&app, Method::POST, &format!("/sessions/{id}/run"), None).await;

    let mut text = String::new();
    let mut messages = Vec::new();
    while !messages.iter().any(|(_, m): &(String, Value)| m["type"] == "mode" && m["payload"]["mode"] == "halted") {
        let chunk = tokio::time::timeout(Duration::from_secs(5), body.next())
            .await
            .expect("push stream stalled")
            .expect("push stream ended")
            .unwrap();
        text.push_str(&String::from_utf8_lossy(&chunk));
        messages = sse_messages(&text);
    }
    for (name, m) in &messages {
        assert_eq!(name, m["type"].as_str().unwrap());
        assert!(m.get("payload").is_some());
    }

    // replaying deltas over a fresh snapshot reaches the served state
    let (_, view) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    let mut replay = serde_json::to_value(tm_lmc::lmc::LmcState::default()).unwrap();
    let mut occurrences = Vec::new();
    for (_, m) in &messages {
        match m["type"].as_str().unwrap() {
            "delta" => {
                let p = m["payload"].as_object().unwrap();
                for (k, v) in p {
                    if k == "mailboxes" {
                        for (addr, cell) in v.as_object().unwrap() {
                            replay["mailboxes"][addr.parse::<usize>().unwrap()] = cell.clone();
                        }
                    } else if k != "records" {
                        replay[k] = v.clone();
                    }
                }
            }
            "occurrence" => occurrences.push(m["payload"].clone()),
            _ => {}
        }
    }
    assert_eq!(replay, view["state"]);
    assert_eq!(Value::Array(occurrences), view["occurrences"]);

    let (s, _) = call(&app, Method::GET, "/sessions/nope/events", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
