#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sampling_core::domain::{FeedbackCategory, FeedbackTarget, Timestamp};
use sampling_core::store::Store;
use sampling_core::workflow::{Actor, CheckInRequest, FeedbackDraft, RoundPhase};

pub fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> String {
    manifest().join("tests/fixtures").join(name).display().to_string()
}

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn sampling(data: &Path, args: &[&str]) -> Outcome {
    let mut argv = vec!["sampling".to_owned(), "--data-dir".to_owned(), data.display().to_string()];
    argv.extend(args.iter().map(|a| a.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = sampling_cli::run(argv, &[], &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

pub fn ts(s: &str) -> Timestamp {
    s.parse().unwrap()
}

/// Round advanced to field sampling, four check-ins (one rejected, two
/// completing their task) and two feedback entries.
pub fn seed(data: &Path) {
    let mut store = Store::open(data).unwrap();
    let toc_101 = task_at(&store, "P-101", "M-TOC");
    let cond_103 = task_at(&store, "P-103", "M-COND");
    let toc_201 = task_at(&store, "P-201", "M-TOC");
    let date = "2024-03-05".parse().unwrap();
    let engine = store.engine_mut();
    for (phase, role, at) in [
        (RoundPhase::MaterialPreparation, "QCSupport", "2024-03-05T07:00:00Z"),
        (RoundPhase::BottleDeposit, "QCTechnician", "2024-03-05T07:30:00Z"),
        (RoundPhase::FieldSampling, "Technician", "2024-03-05T08:00:00Z"),
    ] {
        engine.advance_phase(date, phase, &Actor::new("u-1", role), ts(at)).unwrap();
    }
    let tech = Actor::new("tech-7", "Technician");
    let check = |task: &str, items: &[&str], at: &str| CheckInRequest {
        task_id: task.into(),
        actor: tech.clone(),
        timestamp: ts(at),
        completed_items: items.iter().map(|s| s.to_string()).collect(),
        expected_version: None,
    };
    engine.check_in(check(&toc_101, &["flush"], "2024-03-05T08:10:00Z")).unwrap();
    engine.check_in(check(&toc_101, &["fill", "label"], "2024-03-05T08:25:00Z")).unwrap();
    engine.check_in(check(&cond_103, &["fill"], "2024-03-05T08:40:00Z")).unwrap();
    engine.check_in(check(&toc_201, &["rinse"], "2024-03-05T09:00:00Z")).unwrap_err();
    engine.check_in(check(&toc_201, &["flush"], "2024-03-05T09:05:00Z")).unwrap();
    engine
        .record_feedback(FeedbackDraft {
            target: FeedbackTarget::Point("P-101".into()),
            author: tech.clone(),
            text: "Valve sticks;\topen slowly".into(),
            category: FeedbackCategory::ErrorProne,
            timestamp: ts("2024-03-05T08:30:00Z"),
        })
        .unwrap();
    engine
        .record_feedback(FeedbackDraft {
            target: FeedbackTarget::Task(toc_201.as_str().into()),
            author: tech,
            text: "Flush 30 s before filling".into(),
            category: FeedbackCategory::TacitKnowledge,
            timestamp: ts("2024-03-05T09:10:00Z"),
        })
        .unwrap();
    store.persist().unwrap();
}

pub fn task_at(store: &Store, point: &str, method: &str) -> String {
    store
        .engine()
        .state()
        .worksheets
        .values()
        .flat_map(|w| w.tasks.values())
        .find(|t| t.point_id.as_str() == point && t.method_id.as_str() == method)
        .unwrap()
        .task_id
        .to_string()
}

pub fn golden(name: &str) -> PathBuf {
    manifest().join("tests/golden").join(format!("{name}.txt"))
}
