//! Performance stats against an independent recomputation, and the
//! completion-rate fixture.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sampling_core::analysis::{performance, progress, DateWindow};
use sampling_core::domain::{CheckStatus, MethodId, SamplingTask, Timestamp};
use sampling_core::workflow::{Actor, AuditEvent, Change, Outcome, Subject};

use crate::{ensure, Verdict};

const EVENTS: usize = 500;
const DAY0: i64 = 1_709_596_800;

/// Check-ins over 30 tasks across three days. Completed tasks only see rejections.
fn synthesize(rng: &mut ChaCha8Rng) -> Vec<AuditEvent> {
    let mut done = [false; 30];
    let mut clock = DAY0 + 6 * 3600;
    (0..EVENTS)
        .map(|i| {
            clock += rng.gen_range(0..1800);
            let n = rng.gen_range(0..30);
            let task = format!("T{n:02}");
            let reject = rng.gen_bool(0.2) || done[n];
            let status = if rng.gen_bool(0.4) { CheckStatus::Completed } else { CheckStatus::Partial };
            let ts = Timestamp::from_unix(clock).unwrap();
            done[n] |= !reject && status == CheckStatus::Completed;
            AuditEvent {
                seq: i as u64 + 1,
                subject: Subject::Task(task.as_str().into()),
                action: "CheckIn".into(),
                actor: Actor::new("t", "Technician"),
                timestamp: ts,
                outcome: if reject { Outcome::Rejected } else { Outcome::Accepted },
                reason: reject.then(|| "StatusRegression: x".to_owned()),
                change: (!reject).then(|| Change::CheckedIn {
                    task_id: task.as_str().into(),
                    steps: vec![format!("s{i}")],
                    status,
                    execution_time: (status == CheckStatus::Completed).then_some(ts),
                }),
            }
        })
        .collect()
}

struct Expected {
    attempts: usize,
    rejected: usize,
    durations: Vec<i64>,
}

/// Tabulate the window's check-ins, then first accepted start and
/// completing end per task.
fn second_fold(events: &[AuditEvent], from: NaiveDate, to: NaiveDate) -> Expected {
    let rows: Vec<&AuditEvent> = events
        .iter()
        .filter(|e| e.action == "CheckIn" && (from..=to).contains(&e.timestamp.date()))
        .collect();
    let mut start: BTreeMap<String, i64> = BTreeMap::new();
    let mut end: BTreeMap<String, i64> = BTreeMap::new();
    for e in rows.iter().filter(|e| e.outcome == Outcome::Accepted) {
        let task = e.subject.to_string();
        let t = e.timestamp.unix();
        start.entry(task.clone()).and_modify(|s| *s = (*s).min(t)).or_insert(t);
        if matches!(e.change, Some(Change::CheckedIn { status: CheckStatus::Completed, .. })) {
            end.insert(task, t);
        }
    }
    let mut durations: Vec<i64> = end.iter().map(|(task, e)| e - start[task]).collect();
    durations.sort();
    Expected {
        attempts: rows.len(),
        rejected: rows.iter().filter(|e| e.outcome == Outcome::Rejected).count(),
        durations,
    }
}

pub fn check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let events = synthesize(&mut rng);
    let day = |n: u64| NaiveDate::from_ymd_opt(2024, 3, 5).unwrap() + chrono::Days::new(n);
    for (from, to) in [(day(0), day(0)), (day(0), day(2)), (day(1), day(9))] {
        let got = performance(&events, DateWindow::new(from, to));
        let want = second_fold(&events, from, to);
        let n = want.durations.len();
        let mean = (n > 0).then(|| want.durations.iter().sum::<i64>() as f64 / n as f64);
        let median = match n {
            0 => None,
            _ if n % 2 == 1 => Some(want.durations[n / 2] as f64),
            _ => Some((want.durations[n / 2 - 1] + want.durations[n / 2]) as f64 / 2.0),
        };
        let error_rate = if want.attempts == 0 { 0.0 } else { want.rejected as f64 / want.attempts as f64 };
        ensure(
            got.attempts == want.attempts
                && got.rejected == want.rejected
                && got.error_rate == error_rate
                && got.completed_tasks == n
                && got.mean_duration_secs == mean
                && got.median_duration_secs == median
                && got.max_duration_secs == want.durations.last().copied(),
            || format!("window {from}..{to}: {got:?} disagrees with the second fold"),
        )?;
    }

    let date = day(0);
    let mut tasks: Vec<SamplingTask> = (0..10)
        .map(|i| SamplingTask::new("Z-A".into(), format!("P-{i:03}").into(), MethodId::from("M-TOC"), date, "Technician".into()))
        .collect();
    for t in tasks.iter_mut().take(4) {
        t.status = CheckStatus::Completed;
    }
    let p = progress(&tasks, Timestamp::from_unix(DAY0).unwrap());
    ensure(p.completion_rate == 0.4, || format!("completion rate {} for 4 of 10", p.completion_rate))?;
    Ok(format!("{EVENTS}-event log matches the second fold over 3 windows, 4/10 complete gives 0.4"))
}
