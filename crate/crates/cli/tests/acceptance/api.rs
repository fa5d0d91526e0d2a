//! Concurrent check-ins on one task through the HTTP router.

use axum::http::StatusCode;
use axum::Router;
use serde_json::{json, Value};

use crate::{ensure, Verdict};

#[path = "../../../service/tests/common/mod.rs"]
mod common;

use common::{call, prepared, state_in, task_id, ts, DATE};

/// Worksheet version after ingestion and three phase advances.
const BASE_VERSION: u64 = 4;
const RACES: usize = 20;

async fn check_in(app: &Router, id: &str, actor: &str, items: &[&str], minute: u32) -> (StatusCode, Value) {
    call(
        app,
        "POST",
        &format!("/api/tasks/{id}/checkin"),
        Some("Technician"),
        Some(json!({"actor": actor, "timestamp": ts(minute), "completed_items": items, "expected_version": 0})),
    )
    .await
}

async fn fresh() -> (tempfile::TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    let app = sampling_service::app(state_in(dir.path()), None);
    prepared(&app).await;
    (dir, app)
}

async fn interleavings() -> Result<(), String> {
    for a_first in [true, false] {
        let (_dir, app) = fresh().await;
        let id = task_id(&app, "P-101", "M-CFU").await;
        let order = if a_first { ["alice", "bob"] } else { ["bob", "alice"] };
        let first = check_in(&app, &id, order[0], &["flush"], 10).await.0;
        let second = check_in(&app, &id, order[1], &["flush", "fill"], 11).await.0;
        ensure(first == StatusCode::OK && second == StatusCode::CONFLICT, || {
            format!("{} first: got {first} then {second}", order[0])
        })?;
    }
    Ok(())
}

async fn races() -> Result<(), String> {
    for round in 0..RACES {
        let (_dir, app) = fresh().await;
        let id = task_id(&app, "P-101", "M-CFU").await;
        let handles: Vec<_> = ["alice", "bob"]
            .into_iter()
            .map(|actor| {
                let (app, id) = (app.clone(), id.clone());
                tokio::spawn(async move { check_in(&app, &id, actor, &["flush"], 10).await.0 })
            })
            .collect();
        let mut codes = Vec::new();
        for h in handles {
            codes.push(h.await.map_err(|e| e.to_string())?);
        }
        codes.sort();
        ensure(codes == [StatusCode::OK, StatusCode::CONFLICT], || format!("race {round}: {codes:?}"))?;
    }
    Ok(())
}

/// Completes every task while readers check that progress counts match the
/// version they were served with.
async fn snapshot_reads() -> Result<usize, String> {
    let (_dir, app) = fresh().await;
    let (_, sheet) = call(&app, "GET", &format!("/api/worksheets/{DATE}"), None, None).await;
    let tasks: Vec<(String, Vec<String>)> = sheet["payload"]["tasks"]
        .as_array()
        .ok_or("worksheet has no tasks")?
        .iter()
        .map(|t| {
            let steps = t["key_steps"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_owned()).collect();
            (t["task_id"].as_str().unwrap().to_owned(), steps)
        })
        .collect();
    let total = tasks.len() as u64;
    let writer = {
        let app = app.clone();
        tokio::spawn(async move {
            for (i, (id, steps)) in tasks.iter().enumerate() {
                let items: Vec<&str> = steps.iter().map(String::as_str).collect();
                let (s, _) = check_in(&app, id, "t", &items, 10 + i as u32).await;
                if s != StatusCode::OK {
                    return Err(format!("check-in on {id} returned {s}"));
                }
                tokio::task::yield_now().await;
            }
            Ok(())
        })
    };
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let app = app.clone();
            tokio::spawn(async move {
                for _ in 0..50 {
                    let (_, p) = call(&app, "GET", &format!("/api/progress/{DATE}"), None, None).await;
                    let version = p["version"].as_u64().unwrap_or(0);
                    let by_status = &p["payload"]["by_status"];
                    let sum: u64 = ["Untouched", "Partial", "Completed"].iter().filter_map(|s| by_status[*s].as_u64()).sum();
                    let completed = by_status["Completed"].as_u64().unwrap_or(u64::MAX);
                    if sum != total || completed + BASE_VERSION != version {
                        return Err(format!("torn read: version {version}, {completed} completed, {sum} tasks"));
                    }
                    tokio::task::yield_now().await;
                }
                Ok(50)
            })
        })
        .collect();
    writer.await.map_err(|e| e.to_string())??;
    let mut reads = 0;
    for r in readers {
        reads += r.await.map_err(|e| e.to_string())??;
    }
    Ok(reads)
}

pub fn check() -> Verdict {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(async {
        interleavings().await?;
        races().await?;
        let reads = snapshot_reads().await?;
        Ok(format!("both orders and {RACES} races give one 200 and one 409, {reads} progress reads consistent"))
    })
}
