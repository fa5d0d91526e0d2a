//! Progress, duration and error-rate statistics over worksheets and the
//! audit trail.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{
    CheckStatus, FeedbackCategory, FeedbackEntry, SamplingTask, TaskId, Timestamp, ZoneId,
};
use crate::workflow::{AuditEvent, Change, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressSnapshot {
    pub as_of: Timestamp,
    pub total: usize,
    pub by_status: BTreeMap<CheckStatus, usize>,
    /// Completed over total; 1.0 for an empty worksheet.
    pub completion_rate: f64,
    pub by_zone: BTreeMap<ZoneId, f64>,
}

pub fn progress<'a>(
    tasks: impl IntoIterator<Item = &'a SamplingTask>,
    as_of: Timestamp,
) -> ProgressSnapshot {
    let mut by_status: BTreeMap<CheckStatus, usize> =
        CheckStatus::ALL.iter().map(|s| (*s, 0)).collect();
    let mut zones: BTreeMap<ZoneId, (usize, usize)> = BTreeMap::new();
    let mut total = 0;
    for t in tasks {
        total += 1;
        *by_status.entry(t.status).or_default() += 1;
        let z = zones.entry(t.zone_id.clone()).or_default();
        z.0 += 1;
        if t.status == CheckStatus::Completed {
            z.1 += 1;
        }
    }
    ProgressSnapshot {
        as_of,
        total,
        completion_rate: rate(by_status[&CheckStatus::Completed], total),
        by_status,
        by_zone: zones
            .into_iter()
            .map(|(z, (n, done))| (z, rate(done, n)))
            .collect(),
    }
}

fn rate(done: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        done as f64 / total as f64
    }
}

/// Inclusive range of calendar dates (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl DateWindow {
    pub fn new(from: NaiveDate, to: NaiveDate) -> Self {
        Self { from, to }
    }

    pub fn single(date: NaiveDate) -> Self {
        Self::new(date, date)
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        (self.from..=self.to).contains(&ts.date())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceStats {
    pub window: DateWindow,
    pub attempts: usize,
    pub rejected: usize,
    /// Rejected over total check-in attempts; 0 when there were none.
    pub error_rate: f64,
    pub completed_tasks: usize,
    pub mean_duration_secs: Option<f64>,
    pub median_duration_secs: Option<f64>,
    pub max_duration_secs: Option<i64>,
}

/// Folds the check-in events of `events` that fall inside `window`.
///
/// A task's duration runs from its first accepted check-in to the check-in
/// that completed it.
pub fn performance(events: &[AuditEvent], window: DateWindow) -> PerformanceStats {
    let mut attempts = 0;
    let mut rejected = 0;
    let mut first_seen: HashMap<&TaskId, Timestamp> = HashMap::new();
    let mut durations: Vec<i64> = Vec::new();
    for event in events
        .iter()
        .filter(|e| e.is_check_in() && window.contains(e.timestamp))
    {
        attempts += 1;
        if event.outcome == Outcome::Rejected {
            rejected += 1;
            continue;
        }
        if let Some(Change::CheckedIn {
            task_id, status, ..
        }) = &event.change
        {
            let first = *first_seen.entry(task_id).or_insert(event.timestamp);
            if *status == CheckStatus::Completed {
                durations.push(event.timestamp.seconds_since(first));
            }
        }
    }
    durations.sort_unstable();
    let n = durations.len();
    PerformanceStats {
        window,
        attempts,
        rejected,
        error_rate: if attempts == 0 {
            0.0
        } else {
            rejected as f64 / attempts as f64
        },
        completed_tasks: n,
        mean_duration_secs: (n > 0).then(|| durations.iter().sum::<i64>() as f64 / n as f64),
        median_duration_secs: (n > 0).then(|| {
            if n % 2 == 1 {
                durations[n / 2] as f64
            } else {
                (durations[n / 2 - 1] + durations[n / 2]) as f64 / 2.0
            }
        }),
        max_duration_secs: durations.last().copied(),
    }
}

/// Feedback in `window`, grouped by category, each group ordered by
/// creation time then id.
pub fn feedback_digest<'a>(
    entries: impl IntoIterator<Item = &'a FeedbackEntry>,
    window: DateWindow,
) -> BTreeMap<FeedbackCategory, Vec<FeedbackEntry>> {
    let mut out: BTreeMap<FeedbackCategory, Vec<FeedbackEntry>> = BTreeMap::new();
    for e in entries.into_iter().filter(|e| window.contains(e.created_at)) {
        out.entry(e.category).or_default().push(e.clone());
    }
    for group in out.values_mut() {
        group.sort_by(|a, b| {
            (a.created_at, &a.feedback_id).cmp(&(b.created_at, &b.feedback_id))
        });
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.1}"))
}

pub fn render_progress_table(date: NaiveDate, p: &ProgressSnapshot) -> String {
    let mut out = String::new();
    writeln!(out, "Progress for {date} (as of {})", p.as_of).unwrap();
    writeln!(out, "{:<12} {:>6}", "Status", "Tasks").unwrap();
    for (status, n) in &p.by_status {
        writeln!(out, "{:<12} {:>6}", status.as_str(), n).unwrap();
    }
    writeln!(out, "{:<12} {:>6}", "Total", p.total).unwrap();
    writeln!(out, "Completion rate: {:.1}%", p.completion_rate * 100.0).unwrap();
    if !p.by_zone.is_empty() {
        writeln!(out, "{:<12} {:>9}", "Zone", "Complete").unwrap();
        for (zone, r) in &p.by_zone {
            writeln!(out, "{:<12} {:>8.1}%", zone.as_str(), r * 100.0).unwrap();
        }
    }
    out
}

pub fn render_performance_table(s: &PerformanceStats) -> String {
    let mut out = String::new();
    writeln!(out, "Performance {} .. {}", s.window.from, s.window.to).unwrap();
    writeln!(out, "Check-in attempts: {}", s.attempts).unwrap();
    writeln!(out, "Rejected:          {}", s.rejected).unwrap();
    writeln!(out, "Error rate:        {:.1}%", s.error_rate * 100.0).unwrap();
    writeln!(out, "Completed tasks:   {}", s.completed_tasks).unwrap();
    writeln!(out, "Duration mean (s): {}", fmt_opt(s.mean_duration_secs)).unwrap();
    writeln!(out, "Duration med. (s): {}", fmt_opt(s.median_duration_secs)).unwrap();
    writeln!(
        out,
        "Duration max (s):  {}",
        s.max_duration_secs.map_or_else(|| "-".to_owned(), |v| v.to_string())
    )
    .unwrap();
    out
}
