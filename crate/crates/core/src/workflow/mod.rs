//! Five-phase sampling round, per-task check-in, RACI authorization,
//! feedback capture and the append-only audit trail.
//!
//! Every mutation attempt is recorded as an [`AuditEvent`]. Accepted events
//! carry a [`Change`], and folding those changes from an empty state with
//! [`EngineState::replay`] reproduces the live state exactly.

mod audit_log;
mod engine;
mod raci;

use std::fmt;

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Action, CheckStatus, FeedbackEntry, PointId, Role, SamplingTask, TaskId, Timestamp,
};

pub use audit_log::{format_event_line, parse_event_line, read_audit_log, AuditLogError, AuditLogWriter};
pub use engine::{CheckInRequest, FeedbackDraft, WorkflowEngine};
pub use raci::{actions, RaciError, RaciLevel, RaciMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoundPhase {
    MaterialPreparation,
    BottleDeposit,
    FieldSampling,
    ChariotReturn,
    SampleReception,
}

impl RoundPhase {
    pub const ALL: [RoundPhase; 5] = [
        RoundPhase::MaterialPreparation,
        RoundPhase::BottleDeposit,
        RoundPhase::FieldSampling,
        RoundPhase::ChariotReturn,
        RoundPhase::SampleReception,
    ];

    /// 1-based position in the round.
    pub fn number(&self) -> u8 {
        *self as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Self::ALL.get(usize::from(n).checked_sub(1)?).copied()
    }

    pub fn successor(&self) -> Option<Self> {
        Self::from_number(self.number() + 1)
    }

    /// The RACI action that authorizes entering this phase.
    pub fn action(&self) -> Action {
        Action::from(match self {
            RoundPhase::MaterialPreparation => actions::PREPARE_MATERIAL,
            RoundPhase::BottleDeposit => actions::DEPOSIT_BOTTLES,
            RoundPhase::FieldSampling => actions::START_SAMPLING,
            RoundPhase::ChariotReturn => actions::RETURN_CHARIOT,
            RoundPhase::SampleReception => actions::RECEIVE_SAMPLES,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RoundPhase::MaterialPreparation => "MaterialPreparation",
            RoundPhase::BottleDeposit => "BottleDeposit",
            RoundPhase::FieldSampling => "FieldSampling",
            RoundPhase::ChariotReturn => "ChariotReturn",
            RoundPhase::SampleReception => "SampleReception",
        }
    }
}

impl fmt::Display for RoundPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RoundPhase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(n) = s.parse::<u8>() {
            return Self::from_number(n).ok_or_else(|| format!("no phase {n}"));
        }
        Self::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown phase `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Actor {
    pub id: String,
    pub role: Role,
}

impl Actor {
    pub fn new(id: impl Into<String>, role: impl Into<Role>) -> Self {
        Self {
            id: id.into(),
            role: role.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub phase: RoundPhase,
    pub actor: Actor,
    pub timestamp: Timestamp,
}

/// A round starts before phase 1 (`current_phase = None`) and moves through
/// the phases one step at a time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingRound {
    pub round_id: String,
    pub date: NaiveDate,
    pub current_phase: Option<RoundPhase>,
    pub phase_log: Vec<PhaseEntry>,
}

impl SamplingRound {
    pub fn new(date: NaiveDate) -> Self {
        Self {
            round_id: round_id(date),
            date,
            current_phase: None,
            phase_log: Vec::new(),
        }
    }
}

pub fn round_id(date: NaiveDate) -> String {
    format!("R-{}", date.format("%Y-%m-%d"))
}

/// The tasks of one execution date together with their round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Worksheet {
    pub date: NaiveDate,
    /// Bumped on every accepted change to this worksheet.
    pub version: u64,
    pub tasks: IndexMap<TaskId, SamplingTask>,
    pub round: SamplingRound,
}

impl Worksheet {
    pub fn new(date: NaiveDate) -> Self {
        Self {
            date,
            version: 0,
            tasks: IndexMap::new(),
            round: SamplingRound::new(date),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id")]
pub enum Subject {
    Task(TaskId),
    Round(String),
    Worksheet(NaiveDate),
    Point(PointId),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Task(id) => write!(f, "task:{id}"),
            Subject::Round(id) => write!(f, "round:{id}"),
            Subject::Worksheet(date) => write!(f, "worksheet:{}", date.format("%Y-%m-%d")),
            Subject::Point(id) => write!(f, "point:{id}"),
        }
    }
}

impl std::str::FromStr for Subject {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, id) = s
            .split_once(':')
            .ok_or_else(|| format!("subject `{s}` lacks a kind prefix"))?;
        match kind {
            "task" => Ok(Subject::Task(id.into())),
            "round" => Ok(Subject::Round(id.to_owned())),
            "worksheet" => crate::domain::parse_date(id)
                .map(Subject::Worksheet)
                .map_err(|e| e.to_string()),
            "point" => Ok(Subject::Point(id.into())),
            other => Err(format!("unknown subject kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Accepted,
    Rejected,
}

/// State delta carried by an accepted event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Change {
    TasksAdded {
        date: NaiveDate,
        tasks: Vec<SamplingTask>,
    },
    CheckedIn {
        task_id: TaskId,
        /// Steps newly checked by this event.
        steps: Vec<String>,
        status: CheckStatus,
        execution_time: Option<Timestamp>,
    },
    PhaseAdvanced {
        date: NaiveDate,
        phase: RoundPhase,
    },
    FeedbackRecorded {
        entry: FeedbackEntry,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub subject: Subject,
    pub action: String,
    pub actor: Actor,
    pub timestamp: Timestamp,
    pub outcome: Outcome,
    /// `Code: message` for rejected attempts.
    pub reason: Option<String>,
    pub change: Option<Change>,
}

impl AuditEvent {
    pub fn is_check_in(&self) -> bool {
        self.action == actions::CHECK_IN
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkflowError {
    #[error("task {task} is {current}; status cannot go back or be re-checked")]
    StatusRegression { task: TaskId, current: CheckStatus },
    #[error("timestamp {given} precedes the last event on {subject} at {last}")]
    ClockSkew {
        subject: String,
        last: Timestamp,
        given: Timestamp,
    },
    #[error("role {role} may not perform {action}")]
    UnauthorizedRole { role: Role, action: Action },
    #[error("round is in {actual}, {expected} required")]
    WrongPhase {
        expected: RoundPhase,
        actual: String,
    },
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("no worksheet for {0}")]
    UnknownWorksheet(NaiveDate),
    #[error("expected version {expected}, current version is {actual}")]
    StaleVersion { expected: u64, actual: u64 },
    #[error("check-in marks no new step")]
    EmptyCheckIn,
    #[error("step `{step}` is not a key step of method {method}")]
    UnknownStep { step: String, method: String },
    #[error("cannot move from {from} to {to}")]
    PhaseSkip { from: String, to: RoundPhase },
    #[error("{} task(s) still untouched without a deviation: {}", tasks.len(), tasks.iter().map(TaskId::as_str).collect::<Vec<_>>().join(", "))]
    IncompleteSampling { tasks: Vec<TaskId> },
    #[error("unknown feedback target {0}")]
    UnknownTarget(String),
    #[error("feedback text is empty")]
    EmptyText,
    #[error("unknown action {0}")]
    UnknownAction(Action),
    #[error("task {0} already exists")]
    DuplicateTask(TaskId),
    #[error("new task {0} must be Untouched at version 0")]
    InvalidNewTask(TaskId),
}

impl WorkflowError {
    /// Stable error code, used in audit reasons and API responses.
    pub fn code(&self) -> &'static str {
        match self {
            WorkflowError::StatusRegression { .. } => "StatusRegression",
            WorkflowError::ClockSkew { .. } => "ClockSkew",
            WorkflowError::UnauthorizedRole { .. } => "UnauthorizedRole",
            WorkflowError::WrongPhase { .. } => "WrongPhase",
            WorkflowError::UnknownTask(_) => "UnknownTask",
            WorkflowError::UnknownWorksheet(_) => "UnknownWorksheet",
            WorkflowError::StaleVersion { .. } => "StaleVersion",
            WorkflowError::EmptyCheckIn => "EmptyCheckIn",
            WorkflowError::UnknownStep { .. } => "UnknownStep",
            WorkflowError::PhaseSkip { .. } => "PhaseSkip",
            WorkflowError::IncompleteSampling { .. } => "IncompleteSampling",
            WorkflowError::UnknownTarget(_) => "UnknownTarget",
            WorkflowError::EmptyText => "EmptyText",
            WorkflowError::UnknownAction(_) => "UnknownAction",
            WorkflowError::DuplicateTask(_) => "DuplicateTask",
            WorkflowError::InvalidNewTask(_) => "InvalidNewTask",
        }
    }

    pub const CODES: [&'static str; 16] = [
        "StatusRegression",
        "ClockSkew",
        "UnauthorizedRole",
        "WrongPhase",
        "UnknownTask",
        "UnknownWorksheet",
        "StaleVersion",
        "EmptyCheckIn",
        "UnknownStep",
        "PhaseSkip",
        "IncompleteSampling",
        "UnknownTarget",
        "EmptyText",
        "UnknownAction",
        "DuplicateTask",
        "InvalidNewTask",
    ];
}

/// Everything the engine mutates. Serializes deterministically, so two equal
/// states produce identical bytes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub worksheets: std::collections::BTreeMap<NaiveDate, Worksheet>,
    pub feedback: Vec<FeedbackEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("event {seq}: {message}")]
    Inconsistent { seq: u64, message: String },
}

impl EngineState {
    pub fn worksheet(&self, date: NaiveDate) -> Option<&Worksheet> {
        self.worksheets.get(&date)
    }

    pub fn find_task(&self, task_id: &str) -> Option<&SamplingTask> {
        self.worksheets
            .values()
            .find_map(|ws| ws.tasks.get(task_id))
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    /// Folds the accepted changes of `events` onto an empty state.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a AuditEvent>) -> Result<Self, ReplayError> {
        let mut state = EngineState::default();
        for event in events {
            if event.outcome != Outcome::Accepted {
                continue;
            }
            let change = event.change.as_ref().ok_or_else(|| ReplayError::Inconsistent {
                seq: event.seq,
                message: "accepted event without a change".into(),
            })?;
            state
                .apply(change, &event.actor, event.timestamp)
                .map_err(|message| ReplayError::Inconsistent {
                    seq: event.seq,
                    message,
                })?;
        }
        Ok(state)
    }

    /// Applies a change that has already been validated.
    pub(crate) fn apply(
        &mut self,
        change: &Change,
        actor: &Actor,
        timestamp: Timestamp,
    ) -> Result<(), String> {
        match change {
            Change::TasksAdded { date, tasks } => {
                let ws = self
                    .worksheets
                    .entry(*date)
                    .or_insert_with(|| Worksheet::new(*date));
                for task in tasks {
                    if ws.tasks.insert(task.task_id.clone(), task.clone()).is_some() {
                        return Err(format!("task {} added twice", task.task_id));
                    }
                }
                ws.version += 1;
            }
            Change::CheckedIn {
                task_id,
                steps,
                status,
                execution_time,
            } => {
                let ws = self
                    .worksheets
                    .values_mut()
                    .find(|ws| ws.tasks.contains_key(task_id))
                    .ok_or_else(|| format!("check-in on unknown task {task_id}"))?;
                let task = ws.tasks.get_mut(task_id).expect("found above");
                if *status < task.status {
                    return Err(format!("status regression on {task_id}"));
                }
                task.checked_steps.extend(steps.iter().cloned());
                task.status = *status;
                task.execution_time = *execution_time;
                task.version += 1;
                ws.version += 1;
            }
            Change::PhaseAdvanced { date, phase } => {
                let ws = self
                    .worksheets
                    .get_mut(date)
                    .ok_or_else(|| format!("phase change on unknown worksheet {date}"))?;
                if ws.round.current_phase.map_or(1, |p| p.number() + 1) != phase.number() {
                    return Err(format!("phase skip to {phase}"));
                }
                ws.round.current_phase = Some(*phase);
                ws.round.phase_log.push(PhaseEntry {
                    phase: *phase,
                    actor: actor.clone(),
                    timestamp,
                });
                ws.version += 1;
            }
            Change::FeedbackRecorded { entry } => self.feedback.push(entry.clone()),
        }
        Ok(())
    }
}
