//! Drives the REST API in-process: upload, landmarks, steps, artifacts.

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use geoseg::fixtures::{make_fixture, FixtureKind};
use geoseg::io;
use geoseg::server::{router, AppState};

async fn call(app: &axum::Router, method: &str, uri: &str, body: Vec<u8>) -> (u16, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn parse(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap_or(Value::Null)
}

#[tokio::main]
async fn main() -> geoseg::Result<()> {
    let app = router(AppState::default());
    let png = io::image_to_png(&make_fixture(FixtureKind::Disk, 0).image)?;
    let (status, body) = call(&app, "POST", "/sessions", png).await;
    let created = parse(&body);
    let id = created["id"].as_str().unwrap_or_default().to_string();
    println!("POST /sessions -> {status} {id}");

    let points = json!({ "points": [[99.5, 63.5], [45.5, 94.68], [45.5, 32.32]] });
    let (status, _) = call(&app, "PUT", &format!("/sessions/{id}/landmarks"), points.to_string().into_bytes()).await;
    println!("PUT landmarks -> {status}");
    loop {
        let (status, body) = call(&app, "POST", &format!("/sessions/{id}/step"), vec![]).await;
        let v = parse(&body);
        println!("POST step -> {status} iteration {} area_delta {} stage {}", v["iteration"], v["area_delta"], v["stage"]);
        if status != 200 || v["converged"].as_bool() != Some(false) {
            break;
        }
    }
    let (status, csv) = call(&app, "GET", &format!("/sessions/{id}/artifacts/energy.csv"), vec![]).await;
    println!("GET energy.csv -> {status}\n{}", String::from_utf8_lossy(&csv));
    Ok(())
}
