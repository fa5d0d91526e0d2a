#![allow(dead_code)]

use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use sampling_core::domain::Registry;
use sampling_core::sequencer::DistanceModel;
use sampling_core::store::Store;
use sampling_service::AppState;

pub const DATE: &str = "2024-03-05";

pub fn registry() -> Registry {
    serde_json::from_str(
        r#"{"zones":[{"zone_id":"Z-A","name":"Hall A","floor_plan_ref":"plans/z-a.svg"},
                     {"zone_id":"Z-B","name":"Hall B","floor_plan_ref":"plans/z-b.svg"}],
            "points":[
              {"point_id":"P-101","zone_id":"Z-A","coords":{"x":0.1,"y":0.2},"water_type":"PurifiedWater","media_refs":["img/p101.jpg"]},
              {"point_id":"P-102","zone_id":"Z-A","coords":{"x":0.4,"y":0.2},"water_type":"PurifiedWater"},
              {"point_id":"P-103","zone_id":"Z-A","coords":{"x":0.7,"y":0.9},"water_type":"CondensedPurifiedSteam"},
              {"point_id":"P-104","zone_id":"Z-A","coords":{"x":0.9,"y":0.9},"water_type":"PurifiedWater"},
              {"point_id":"P-201","zone_id":"Z-B","coords":{"x":0.5,"y":0.5},"water_type":"PurifiedWater"},
              {"point_id":"P-202","zone_id":"Z-B","coords":{"x":0.9,"y":0.1},"water_type":"PurifiedWater"}],
            "methods":[{"method_id":"M-TOC","key_steps":["flush","fill"]},
                       {"method_id":"M-CFU","key_steps":["flush","fill","seal"]}]}"#,
    )
    .unwrap()
}

pub const SHEET: &str = "Sampling Zone;Sampling Method;Sampling Point;Sampling Execution Date
Z-A;M-TOC;P-101;2024-03-05
Z-A;M-CFU;P-101;2024-03-05
Z-A;M-TOC;P-102;2024-03-05
Z-A;M-TOC;P-103;2024-03-05
Z-B;M-TOC;P-201;2024-03-05
Z-B;M-CFU;P-202;2024-03-05
";

pub fn state_in(dir: &Path) -> AppState {
    Store::init(dir, &registry()).unwrap();
    AppState::new(Store::open(dir).unwrap(), DistanceModel::new(5.0).unwrap())
}

pub async fn call(app: &Router, method: &str, uri: &str, role: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(role) = role {
        req = req.header("x-role", role);
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub async fn ingest(app: &Router, text: &str) -> (StatusCode, Value) {
    let req = Request::post("/api/ingest")
        .header("content-type", "text/plain")
        .body(Body::from(text.to_owned()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

pub fn ts(minute: u32) -> String {
    format!("{DATE}T08:{minute:02}:00Z")
}

/// Ingests the sheet and advances the round to field sampling.
pub async fn prepared(app: &Router) {
    let (s, body) = ingest(app, SHEET).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    for (phase, role, minute) in [
        ("MaterialPreparation", "QCSupport", 1),
        ("BottleDeposit", "QCTechnician", 2),
        ("FieldSampling", "Technician", 3),
    ] {
        let (s, body) = call(
            app,
            "POST",
            &format!("/api/rounds/{DATE}/advance"),
            Some(role),
            Some(json!({"phase": phase, "actor": "u1", "timestamp": ts(minute)})),
        )
        .await;
        assert_eq!(s, StatusCode::OK, "{body}");
    }
}

pub async fn task_id(app: &Router, point: &str, method: &str) -> String {
    let (_, body) = call(app, "GET", &format!("/api/worksheets/{DATE}?point={point}&method={method}"), None, None).await;
    body["payload"]["tasks"][0]["task_id"].as_str().unwrap().to_owned()
}
