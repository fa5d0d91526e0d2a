//! Random command streams against the engine: no regressions, no phase
//! skips, RACI-sound accepted events, replay equal to live state.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sampling_core::domain::{
    CheckStatus, FeedbackCategory, FeedbackTarget, MethodId, Registry, SamplingTask, TaskId, Timestamp,
};
use sampling_core::workflow::{
    actions, format_event_line, parse_event_line, Actor, Change, CheckInRequest, EngineState, FeedbackDraft,
    Outcome, RaciLevel, RaciMatrix, RoundPhase, WorkflowEngine,
};

use crate::{ensure, Verdict};

const SEEDS: u64 = 24;
const COMMANDS: usize = 1000;
const ROLES: [&str; 5] = ["Technician", "Supervisor", "QCSupport", "QCTechnician", "Visitor"];
const STEPS: [&str; 4] = ["flush", "fill", "seal", "label"];

fn registry() -> Arc<Registry> {
    Arc::new(
        serde_json::from_str(
            r#"{"zones":[{"zone_id":"Z-A","name":"A"},{"zone_id":"Z-B","name":"B"}],
                "points":[
                  {"point_id":"P-101","zone_id":"Z-A","coords":{"x":0.1,"y":0.2},"water_type":"PurifiedWater"},
                  {"point_id":"P-102","zone_id":"Z-A","coords":{"x":0.4,"y":0.2},"water_type":"PurifiedWater"},
                  {"point_id":"P-201","zone_id":"Z-B","coords":{"x":0.5,"y":0.5},"water_type":"PurifiedWater"}],
                "methods":[{"method_id":"M-TOC","key_steps":["flush","fill"]},
                           {"method_id":"M-CFU","key_steps":["flush","fill","seal"]}]}"#,
        )
        .unwrap(),
    )
}

fn dates() -> [NaiveDate; 2] {
    [NaiveDate::from_ymd_opt(2024, 3, 5).unwrap(), NaiveDate::from_ymd_opt(2024, 3, 6).unwrap()]
}

fn seed_tasks() -> Vec<SamplingTask> {
    let mut out = Vec::new();
    for date in dates() {
        for (zone, point) in [("Z-A", "P-101"), ("Z-A", "P-102"), ("Z-B", "P-201")] {
            for method in ["M-TOC", "M-CFU"] {
                out.push(SamplingTask::new(zone.into(), point.into(), MethodId::from(method), date, "Technician".into()));
            }
        }
    }
    out
}

#[derive(Default)]
struct Tally {
    events: usize,
    accepted_check_ins: usize,
    completed: usize,
}

fn run_seed(seed: u64, raci: &RaciMatrix, tally: &mut Tally) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut engine = WorkflowEngine::new(registry(), raci.clone());
    let mut clock = 1_709_600_000i64;
    let tasks = seed_tasks();
    let ids: Vec<TaskId> = tasks.iter().map(|t| t.task_id.clone()).collect();
    engine
        .add_tasks(tasks, &Actor::new("lims", "System"), Timestamp::from_unix(clock).unwrap())
        .map_err(|e| e.to_string())?;

    for i in 0..COMMANDS {
        clock += rng.gen_range(-120..1800);
        let now = Timestamp::from_unix(clock).unwrap();
        let actor = |role: usize| Actor::new(format!("u{i}"), ROLES[role]);
        match rng.gen_range(0..9) {
            0..=4 => {
                let id = &ids[rng.gen_range(0..ids.len())];
                let current = engine.task(id.as_str()).unwrap().version;
                let mask: u8 = rng.gen_range(0..16);
                let role = if rng.gen_bool(0.7) { 0 } else { rng.gen_range(0..ROLES.len()) };
                let expected_version = match rng.gen_range(0..3) {
                    0 => None,
                    1 => Some(current),
                    _ => Some(rng.gen_range(0..4)),
                };
                let _ = engine.check_in(CheckInRequest {
                    task_id: id.clone(),
                    actor: actor(role),
                    timestamp: now,
                    completed_items: STEPS
                        .iter()
                        .enumerate()
                        .filter(|(b, _)| mask & (1 << b) != 0)
                        .map(|(_, s)| s.to_string())
                        .collect(),
                    expected_version,
                });
            }
            5..=7 => {
                let date = dates()[rng.gen_range(0..2)];
                let current = engine.state().worksheet(date).unwrap().round.current_phase;
                let number = if rng.gen_bool(0.3) { rng.gen_range(1..=5) } else { current.map_or(1, |p| p.number() + 1) };
                let Some(target) = RoundPhase::from_number(number) else { continue };
                let role = if rng.gen_bool(0.3) {
                    rng.gen_range(0..ROLES.len())
                } else {
                    ROLES
                        .iter()
                        .position(|r| raci.level(&(*r).into(), &target.action()) == Ok(RaciLevel::Responsible))
                        .unwrap_or(0)
                };
                let _ = engine.advance_phase(date, target, &actor(role), now);
            }
            _ => {
                let task = engine.task(ids[rng.gen_range(0..ids.len())].as_str()).unwrap().clone();
                let _ = engine.record_feedback(FeedbackDraft {
                    target: if rng.gen_bool(0.5) {
                        FeedbackTarget::Point(task.point_id)
                    } else {
                        FeedbackTarget::Task(task.task_id)
                    },
                    author: actor(rng.gen_range(0..ROLES.len())),
                    text: format!("note {i}"),
                    category: FeedbackCategory::TacitKnowledge,
                    timestamp: now,
                });
            }
        }
    }

    let events = engine.events();
    let mut status: BTreeMap<TaskId, CheckStatus> = BTreeMap::new();
    let mut phase: BTreeMap<NaiveDate, u8> = BTreeMap::new();
    let can = |e: &sampling_core::workflow::AuditEvent, action: &str| {
        raci.can_perform(&e.actor.role, &action.into()).unwrap_or(false)
    };
    for e in events {
        if e.outcome != Outcome::Accepted {
            ensure(e.change.is_none(), || format!("seed {seed}: rejected event {} carries a change", e.seq))?;
            continue;
        }
        match e.change.as_ref() {
            Some(Change::CheckedIn { task_id, status: s, .. }) => {
                let prev = status.insert(task_id.clone(), *s).unwrap_or(CheckStatus::Untouched);
                ensure(*s >= prev, || format!("seed {seed}: status regression on {task_id} at seq {}", e.seq))?;
                ensure(can(e, actions::CHECK_IN), || format!("seed {seed}: {} checked in", e.actor.role))?;
                tally.accepted_check_ins += 1;
            }
            Some(Change::PhaseAdvanced { date, phase: p }) => {
                let prev = phase.insert(*date, p.number()).unwrap_or(0);
                ensure(p.number() == prev + 1, || format!("seed {seed}: phase {prev} -> {} on {date}", p.number()))?;
                ensure(can(e, p.action().as_str()), || format!("seed {seed}: {} advanced to {p:?}", e.actor.role))?;
            }
            Some(Change::FeedbackRecorded { .. }) => {
                ensure(can(e, actions::RECORD_FEEDBACK), || format!("seed {seed}: {} gave feedback", e.actor.role))?;
            }
            Some(Change::TasksAdded { .. }) => {}
            None => return Err(format!("seed {seed}: accepted event {} without a change", e.seq)),
        }
        let line = format_event_line(e);
        let back = parse_event_line(&line).map_err(|err| format!("seed {seed}: {err}"))?;
        ensure(&back == e, || format!("seed {seed}: event {} does not round-trip", e.seq))?;
    }
    let replayed = EngineState::replay(events).map_err(|e| format!("seed {seed}: replay failed: {e}"))?;
    ensure(replayed.canonical_json() == engine.state().canonical_json(), || {
        format!("seed {seed}: replayed state differs from live state")
    })?;
    tally.events += events.len();
    tally.completed += engine
        .state()
        .worksheets
        .values()
        .flat_map(|ws| ws.tasks.values())
        .filter(|t| t.status == CheckStatus::Completed)
        .count();
    Ok(())
}

pub fn check() -> Verdict {
    let raci = RaciMatrix::fixture();
    let mut tally = Tally::default();
    for seed in 0..SEEDS {
        run_seed(seed, &raci, &mut tally)?;
    }
    ensure(tally.accepted_check_ins > 0 && tally.completed > 0, || {
        "generator never completed a task".to_owned()
    })?;
    Ok(format!(
        "{SEEDS} seeds x {COMMANDS} commands, {} events, {} accepted check-ins, 0 regressions, 0 skips",
        tally.events, tally.accepted_check_ins
    ))
}
