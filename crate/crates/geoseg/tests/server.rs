use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use geoseg::fixtures::{make_fixture, FixtureKind};
use geoseg::io;
use geoseg::server::{router, AppState};

async fn call(app: &Router, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Vec<u8>, Option<String>) {
    let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes, ctype)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Value) {
    let (s, b, _) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn disk_png() -> Vec<u8> {
    io::image_to_png(&make_fixture(FixtureKind::Disk, 0).image).unwrap()
}

fn landmarks() -> Vec<u8> {
    serde_json::to_vec(&json!({ "points": [[99.5, 63.5], [45.5, 94.68], [45.5, 32.32]] })).unwrap()
}

async fn session(app: &Router) -> String {
    let (s, v) = call_json(app, "POST", "/sessions", disk_png()).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["v"], 1);
    assert_eq!(v["stage"], "new");
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn upload_formats_and_limits() {
    let app = router(AppState::default());
    let a = session(&app).await;
    let b = session(&app).await;
    assert_ne!(a, b);
    let (s, v) = call_json(&app, "POST", "/sessions", b"hello there".to_vec()).await;
    assert_eq!(s, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    assert_eq!(v["v"], 1);
    let (s, _, _) = call(&app, "POST", "/sessions", vec![0u8; 17 * 1024 * 1024]).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    let (s, _) = call_json(&app, "GET", "/sessions/not-a-session", vec![]).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn landmarks_validation_and_orientation() {
    let app = router(AppState::default());
    let id = session(&app).await;
    let uri = format!("/sessions/{id}/landmarks");
    let (s, v) = call_json(&app, "PUT", &uri, landmarks()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["stage"], "initialized");
    let c: geoseg::geom::Polyline = serde_json::from_value(v["contour"].clone()).unwrap();
    assert!(c.signed_area() > 0.0 && c.self_intersections() == 0);

    // clockwise input comes back counter-clockwise, first point kept
    let cw = serde_json::to_vec(&json!({ "points": [[99.5, 63.5], [45.5, 32.32], [45.5, 94.68]] })).unwrap();
    let (s, v) = call_json(&app, "PUT", &uri, cw).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["landmarks"][0], json!([99.5, 63.5]));
    assert_eq!(v["landmarks"][1], json!([45.5, 94.68]));

    let out = serde_json::to_vec(&json!({ "points": [[10.0, 10.0], [500.0, 3.0], [20.0, 40.0]] })).unwrap();
    assert_eq!(call_json(&app, "PUT", &uri, out).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let close = serde_json::to_vec(&json!({ "points": [[10.0, 10.0], [11.0, 10.0], [20.0, 40.0]] })).unwrap();
    assert_eq!(call_json(&app, "PUT", &uri, close).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn stepping_to_convergence() {
    let app = router(AppState::default());
    let id = session(&app).await;
    let step = |n: usize| format!("/sessions/{id}/step?n={n}");
    assert_eq!(call_json(&app, "POST", &step(1), vec![]).await.0, StatusCode::CONFLICT);
    call_json(&app, "PUT", &format!("/sessions/{id}/landmarks"), landmarks()).await;

    let art = |kind: &str| format!("/sessions/{id}/artifacts/{kind}");
    let (s, mask0, ctype) = call(&app, "GET", &art("mask.pgm"), vec![]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("image/x-portable-graymap"));
    let (_, contour0, _) = call(&app, "GET", &art("contour.json"), vec![]).await;
    let c0 = io::contour_from_json(std::str::from_utf8(&contour0).unwrap()).unwrap();
    assert_eq!(io::mask_from_bytes(&mask0).unwrap(), geoseg::grid::rasterize(&c0, io::mask_from_bytes(&mask0).unwrap().grid).unwrap());
    assert_eq!(call(&app, "GET", &art("tube.pgm"), vec![]).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", &art("picture.gif"), vec![]).await.0, StatusCode::NOT_FOUND);

    let (s, v) = call_json(&app, "POST", &step(0), vec![]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["iteration"], 0);
    assert_eq!(v["v"], 1);

    let mut deltas = Vec::new();
    let mut rows = 3;
    loop {
        let (s, v) = call_json(&app, "POST", &format!("/sessions/{id}/step"), vec![]).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        deltas.push(v["area_delta"].as_f64().unwrap());
        let (_, csv, _) = call(&app, "GET", &art("energy.csv"), vec![]).await;
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), rows);
        rows += 1;
        if v["converged"].as_bool().unwrap() {
            assert_eq!(v["stage"], "converged");
            break;
        }
        assert!(deltas.len() < 20);
    }
    assert!(deltas.last().unwrap() < deltas.first().unwrap(), "{deltas:?}");
    for kind in ["tube.pgm", "xi.rsf1", "omega.rsf1"] {
        let (s, a, _) = call(&app, "GET", &art(kind), vec![]).await;
        assert_eq!(s, StatusCode::OK);
        let (_, b, _) = call(&app, "GET", &art(kind), vec![]).await;
        assert_eq!(a, b, "{kind} reads differ");
    }
    let (_, omega, _) = call(&app, "GET", &art("omega.rsf1"), vec![]).await;
    assert_eq!(io::rsf1_from_bytes(&omega).unwrap().1.len(), 2);
    assert_eq!(call_json(&app, "POST", &step(1), vec![]).await.0, StatusCode::CONFLICT);

    // editing landmarks resets the session
    let (_, v) = call_json(&app, "PUT", &format!("/sessions/{id}/landmarks"), landmarks()).await;
    assert_eq!(v["stage"], "initialized");
    assert_eq!(call_json(&app, "POST", &step(2), vec![]).await.0, StatusCode::OK);
}

#[tokio::test]
async fn concurrent_steps_conflict() {
    let app = router(AppState::default());
    let id = session(&app).await;
    call_json(&app, "PUT", &format!("/sessions/{id}/landmarks"), landmarks()).await;
    let uri = format!("/sessions/{id}/step?n=3");
    let (a, b) = tokio::join!(call_json(&app, "POST", &uri, vec![]), call_json(&app, "POST", &uri, vec![]));
    let mut codes = [a.0, b.0];
    codes.sort();
    assert_eq!(codes, [StatusCode::OK, StatusCode::CONFLICT]);
}

#[tokio::test]
async fn solver_error_keeps_the_last_state() {
    let app = router(AppState::default());
    let id = session(&app).await;
    call_json(&app, "PUT", &format!("/sessions/{id}/landmarks"), landmarks()).await;
    // a drift this strong breaks the Randers compatibility condition
    let mut cfg = geoseg::evolve::SegmentationConfig::default();
    cfg.drift = geoseg::evolve::DriftScaling::Linear;
    cfg.alpha = Some(1e6);
    let (s, _) = call_json(&app, "PUT", &format!("/sessions/{id}/config"), serde_json::to_vec(&cfg).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    let (_, before, _) = call(&app, "GET", &format!("/sessions/{id}/artifacts/contour.json"), vec![]).await;
    let (s, v) = call_json(&app, "POST", &format!("/sessions/{id}/step"), vec![]).await;
    assert_eq!(s, StatusCode::INTERNAL_SERVER_ERROR, "{v}");
    assert_eq!(v["v"], 1);
    let (_, after, _) = call(&app, "GET", &format!("/sessions/{id}/artifacts/contour.json"), vec![]).await;
    assert_eq!(before, after);
    let (_, st) = call_json(&app, "GET", &format!("/sessions/{id}"), vec![]).await;
    assert_eq!(st["stage"], "error");
    assert_eq!(call_json(&app, "POST", &format!("/sessions/{id}/step"), vec![]).await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::with_persistence(dir.path().to_path_buf()).unwrap());
    let id = session(&app).await;
    call_json(&app, "PUT", &format!("/sessions/{id}/landmarks"), landmarks()).await;
    call_json(&app, "POST", &format!("/sessions/{id}/step?n=2"), vec![]).await;
    let (_, c1, _) = call(&app, "GET", &format!("/sessions/{id}/artifacts/contour.json"), vec![]).await;

    let app2 = router(AppState::with_persistence(dir.path().to_path_buf()).unwrap());
    let (s, v) = call_json(&app2, "GET", &format!("/sessions/{id}"), vec![]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["stage"], "initialized");
    let (_, c2, _) = call(&app2, "GET", &format!("/sessions/{id}/artifacts/contour.json"), vec![]).await;
    let (a, b) = (io::contour_from_json(std::str::from_utf8(&c1).unwrap()).unwrap(), io::contour_from_json(std::str::from_utf8(&c2).unwrap()).unwrap());
    assert!((a.length() - b.length()).abs() < 2.0);
}

#[tokio::test]
async fn cors_headers_present() {
    let app = router(AppState::default());
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/sessions")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}
