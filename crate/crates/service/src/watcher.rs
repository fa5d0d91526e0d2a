//! Drop-directory connector standing in for the live LIMS link.
//!
//! Producers should write a file under a temporary name (`.tmp` or `.part`)
//! and rename it into place. Each processed file moves to `processed/` with a
//! `<name>.report.json` next to it; unreadable files move to `failed/`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use sampling_core::ingestion::{IngestReport, WorksheetFormat};
use tokio::task::JoinHandle;

use crate::error::ApiError;
use crate::state::AppState;

pub const PROCESSED_DIR: &str = "processed";
pub const FAILED_DIR: &str = "failed";

#[derive(Debug)]
pub struct DropOutcome {
    pub file: PathBuf,
    pub result: Result<IngestReport, String>,
}

fn pending_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            !name.starts_with('.') && !name.ends_with(".tmp") && !name.ends_with(".part")
        })
        .collect();
    files.sort();
    Ok(files)
}

fn move_into(file: &Path, dir: &Path) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let target = dir.join(file.file_name().expect("listed files have names"));
    std::fs::rename(file, &target)?;
    Ok(target)
}

/// Ingests every pending file in `dir`, oldest name first.
pub fn scan_once(state: &AppState, dir: &Path) -> std::io::Result<Vec<DropOutcome>> {
    let mut out = Vec::new();
    for file in pending_files(dir)? {
        let bytes = std::fs::read(&file)?;
        let result = state
            .ingest(&bytes, WorksheetFormat::for_path(&file))
            .map_err(|e: ApiError| format!("{}: {}", e.code, e.message));
        match &result {
            Ok(report) => {
                let moved = move_into(&file, &dir.join(PROCESSED_DIR))?;
                let mut report_path = moved.into_os_string();
                report_path.push(".report.json");
                let json = serde_json::to_vec_pretty(report).expect("reports serialize");
                std::fs::write(report_path, json)?;
                tracing::info!(file = %file.display(), accepted = report.accepted_count, rejected = report.rejected.len(), "ingested drop file");
            }
            Err(message) => {
                move_into(&file, &dir.join(FAILED_DIR))?;
                tracing::warn!(file = %file.display(), %message, "drop file refused");
            }
        }
        out.push(DropOutcome { file, result });
    }
    Ok(out)
}

struct AliveGuard(AppState);

impl Drop for AliveGuard {
    fn drop(&mut self) {
        self.0.set_watcher_alive(false);
    }
}

/// Polls `dir` until the task is aborted or the directory becomes unreadable.
pub fn spawn_watcher(state: AppState, dir: PathBuf, interval: Duration) -> JoinHandle<()> {
    state.set_watcher_alive(true);
    tokio::spawn(async move {
        let _guard = AliveGuard(state.clone());
        loop {
            let scan_state = state.clone();
            let scan_dir = dir.clone();
            match tokio::task::spawn_blocking(move || scan_once(&scan_state, &scan_dir)).await {
                Ok(Ok(_)) => {}
                Ok(Err(e)) => {
                    tracing::error!(dir = %dir.display(), error = %e, "drop directory unreadable, watcher stopping");
                    return;
                }
                Err(e) => {
                    tracing::error!(error = %e, "drop scan panicked, watcher stopping");
                    return;
                }
            }
            tokio::time::sleep(interval).await;
        }
    })
}
