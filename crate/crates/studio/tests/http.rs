mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use common::*;
use conl2m::melody::parse_midi;
use conl2m_studio::service::{router, AppState, CheckpointRegistry, GenerationStore};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(f: &Fixture, persist: Option<std::path::PathBuf>) -> Router {
    let state = AppState {
        checkpoints: CheckpointRegistry::open(f.checkpoints(), None).unwrap(),
        generations: GenerationStore::new(persist).unwrap(),
    };
    router(Arc::new(state))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>, Option<String>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp.headers().get(header::CONTENT_TYPE).map(|v| v.to_str().unwrap().to_string());
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec(), ctype)
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn generation_round_trip() {
    let f = fixture();
    let app = app(&f, None);
    let lyrics = lyric_text(&f.corpus[0].lyrics);
    let t = f.corpus[0].lyrics.len();
    let (status, body, _) = call(
        &app,
        "POST",
        "/generate",
        Some(json!({"lyrics": lyrics, "controls": {"pitch.avg": 0.9, "rest.variance": 0.2}})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let g = json_of(&body);
    assert_eq!(g["melody"].as_array().unwrap().len(), t);
    assert_eq!(g["syllables"].as_array().unwrap().len(), t);
    let controls = g["request"]["controls"].as_object().unwrap();
    assert_eq!(controls.len(), 9);
    assert_eq!((controls["pitch.avg"].as_f64(), controls["rest.var"].as_f64()), (Some(0.9), Some(0.2)));
    assert_eq!(controls["duration.rng"].as_f64(), Some(0.5));
    let seed = g["request"]["seed"].as_u64().unwrap();
    let id = g["generation_id"].as_str().unwrap().to_string();

    let (status, stored, _) = call(&app, "GET", &format!("/generations/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&stored), g);

    let (status, midi, ctype) = call(&app, "GET", &format!("/generations/{id}/midi"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("audio/midi"));
    assert_eq!(parse_midi(&midi).unwrap().len(), t);

    let (status, roll, _) = call(&app, "GET", &format!("/generations/{id}/pianoroll"), None).await;
    assert_eq!(status, StatusCode::OK);
    let roll = json_of(&roll);
    let notes = roll["notes"].as_array().unwrap();
    assert_eq!(notes.len(), t);
    for (n, syl) in notes.iter().zip(&f.corpus[0].lyrics.syllables) {
        assert_eq!(n["syllable"].as_str(), Some(syl.as_str()));
        assert!(n["offset"].as_f64() > n["onset"].as_f64());
    }

    // The reported seed reproduces the melody and the id.
    let (_, again, _) = call(
        &app,
        "POST",
        "/generate",
        Some(json!({"lyrics": lyrics, "controls": {"pitch.avg": 0.9, "rest.var": 0.2}, "seed": seed})),
    )
    .await;
    let again = json_of(&again);
    assert_eq!(again["melody"], g["melody"]);
    assert_eq!(again["generation_id"], g["generation_id"]);
}

#[tokio::test]
async fn invalid_requests_name_the_field() {
    let f = fixture();
    let app = app(&f, None);
    let cases = [
        (json!({"lyrics": "la-la", "controls": {"pitch.avg": 1.3}}), "controls.pitch.avg"),
        (json!({"lyrics": "la-la", "controls": {"pitch.loud": 0.3}}), "controls.pitch.loud"),
        (json!({"lyrics": "   ", "controls": {}}), "lyrics"),
        (json!({"lyrics": "la", "seed": -4}), "seed"),
        (json!({"lyrics": "la", "controls": {"pitch.avg": "high"}}), "controls.pitch.avg"),
        (json!({"lyrics": "la", "temperature": 2}), "temperature"),
        (json!("la"), "body"),
        (json!({"lyrics": "la", "checkpoint": "../etc"}), "checkpoint"),
    ];
    for (body, field) in cases {
        let (status, resp, _) = call(&app, "POST", "/generate", Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        let resp = json_of(&resp);
        assert_eq!(resp["field"].as_str(), Some(field), "{body} -> {resp}");
        assert!(!resp["error"].as_str().unwrap().is_empty());
    }
    let (status, resp, _) = call(&app, "POST", "/generate", Some(json!({"lyrics": "la", "checkpoint": "nope"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(json_of(&resp)["field"], "checkpoint");
    let (status, _, _) = call(&app, "GET", "/generations/0123456789abcdef/midi", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn corrupt_checkpoints_are_server_errors() {
    let f = fixture();
    std::fs::write(f.checkpoints().join("broken.json"), b"{\"model\": 3}").unwrap();
    let app = app(&f, None);
    let (status, resp, _) = call(&app, "POST", "/generate", Some(json!({"lyrics": "la", "checkpoint": "broken"}))).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(json_of(&resp)["field"], "checkpoint");
}

#[tokio::test]
async fn checkpoints_and_health_are_listed() {
    let f = fixture();
    std::fs::copy(f.latest(), f.checkpoints().join("epoch-0002.json")).unwrap();
    let app = app(&f, None);
    let (status, list, _) = call(&app, "GET", "/checkpoints", None).await;
    assert_eq!(status, StatusCode::OK);
    let list = json_of(&list);
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["epoch-0002", "latest"]);
    assert_eq!(list[1]["default"], true);

    let (status, health, _) = call(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let health = json_of(&health);
    assert_eq!(health["status"], "ok");
    assert_eq!(health["default_checkpoint"], "latest");
    assert_eq!(health["generations"], 0);
}

#[tokio::test]
async fn persisted_generations_survive_a_restart() {
    let f = fixture();
    let store = f.path("generations");
    let first = app(&f, Some(store.clone()));
    let lyrics = lyric_text(&f.corpus[1].lyrics);
    let (_, g, _) = call(&first, "POST", "/generate", Some(json!({"lyrics": lyrics, "seed": 11}))).await;
    let g = json_of(&g);
    let id = g["generation_id"].as_str().unwrap();
    let second = app(&f, Some(store));
    let (status, again, _) = call(&second, "GET", &format!("/generations/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&again), g);
}
