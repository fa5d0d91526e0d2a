use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use chrono::NaiveDate;

use super::{
    actions, Actor, AuditEvent, Change, EngineState, Outcome, RaciError, RaciMatrix, ReplayError,
    RoundPhase, SamplingRound, Subject, WorkflowError,
};
use crate::domain::{
    Action, CheckStatus, FeedbackCategory, FeedbackEntry, FeedbackId, FeedbackTarget, Registry,
    SamplingTask, TaskId, Timestamp,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckInRequest {
    pub task_id: TaskId,
    pub actor: Actor,
    pub timestamp: Timestamp,
    pub completed_items: BTreeSet<String>,
    /// Optimistic-concurrency guard; `None` skips the version check.
    pub expected_version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackDraft {
    pub target: FeedbackTarget,
    pub author: Actor,
    pub text: String,
    pub category: FeedbackCategory,
    pub timestamp: Timestamp,
}

/// Serial command processor over all worksheets.
///
/// Commands validate against the current state, append exactly one audit
/// event (accepted or rejected) and apply the accepted change. Empty
/// check-ins are refused without an event.
#[derive(Debug, Clone)]
pub struct WorkflowEngine {
    registry: Arc<Registry>,
    raci: RaciMatrix,
    state: EngineState,
    events: Vec<AuditEvent>,
    task_dates: HashMap<TaskId, NaiveDate>,
    // Timestamp of the last accepted event per subject.
    last_accepted: HashMap<Subject, Timestamp>,
}

impl WorkflowEngine {
    pub fn new(registry: Arc<Registry>, raci: RaciMatrix) -> Self {
        Self {
            registry,
            raci,
            state: EngineState::default(),
            events: Vec::new(),
            task_dates: HashMap::new(),
            last_accepted: HashMap::new(),
        }
    }

    /// Rebuilds an engine from a persisted audit trail.
    pub fn from_events(
        registry: Arc<Registry>,
        raci: RaciMatrix,
        events: Vec<AuditEvent>,
    ) -> Result<Self, ReplayError> {
        let mut previous = 0;
        for event in &events {
            if event.seq <= previous {
                return Err(ReplayError::Inconsistent {
                    seq: event.seq,
                    message: format!("sequence does not increase after {previous}"),
                });
            }
            previous = event.seq;
        }
        let state = EngineState::replay(&events)?;
        let mut engine = Self::new(registry, raci);
        engine.state = state;
        for event in &events {
            if event.outcome == Outcome::Accepted {
                engine.last_accepted.insert(event.subject.clone(), event.timestamp);
            }
        }
        engine.events = events;
        engine.reindex();
        Ok(engine)
    }

    fn reindex(&mut self) {
        self.task_dates = self
            .state
            .worksheets
            .iter()
            .flat_map(|(date, ws)| ws.tasks.keys().map(move |id| (id.clone(), *date)))
            .collect();
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn raci(&self) -> &RaciMatrix {
        &self.raci
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn events_after(&self, seq: u64) -> &[AuditEvent] {
        let start = self.events.partition_point(|e| e.seq <= seq);
        &self.events[start..]
    }

    pub fn task(&self, task_id: &str) -> Option<&SamplingTask> {
        let date = self.task_dates.get(task_id)?;
        self.state.worksheets.get(date)?.tasks.get(task_id)
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &TaskId> {
        self.task_dates.keys()
    }

    /// Events for one subject in sequence order.
    pub fn audit_trail(&self, subject: &Subject) -> Vec<&AuditEvent> {
        self.events.iter().filter(|e| &e.subject == subject).collect()
    }

    pub fn can_perform(&self, role: &crate::domain::Role, action: &Action) -> Result<bool, WorkflowError> {
        self.raci.can_perform(role, action).map_err(|e| match e {
            RaciError::UnknownAction(a) => WorkflowError::UnknownAction(a),
            other => unreachable!("level lookup only fails on unknown actions: {other}"),
        })
    }

    fn authorize(&self, actor: &Actor, action: &str) -> Result<(), WorkflowError> {
        let action = Action::from(action);
        if self.can_perform(&actor.role, &action)? {
            Ok(())
        } else {
            Err(WorkflowError::UnauthorizedRole {
                role: actor.role.clone(),
                action,
            })
        }
    }

    fn check_clock(&self, subject: &Subject, given: Timestamp) -> Result<(), WorkflowError> {
        match self.last_accepted.get(subject) {
            Some(&last) if given < last => Err(WorkflowError::ClockSkew {
                subject: subject.to_string(),
                last,
                given,
            }),
            _ => Ok(()),
        }
    }

    fn record<T>(
        &mut self,
        subject: Subject,
        action: &str,
        actor: &Actor,
        timestamp: Timestamp,
        outcome: Result<(Change, T), WorkflowError>,
    ) -> Result<T, WorkflowError> {
        let seq = self.events.last().map_or(1, |e| e.seq + 1);
        let (event, result) = match outcome {
            Ok((change, value)) => {
                self.state
                    .apply(&change, actor, timestamp)
                    .expect("validated change applies");
                self.last_accepted.insert(subject.clone(), timestamp);
                (
                    AuditEvent {
                        seq,
                        subject,
                        action: action.to_owned(),
                        actor: actor.clone(),
                        timestamp,
                        outcome: Outcome::Accepted,
                        reason: None,
                        change: Some(change),
                    },
                    Ok(value),
                )
            }
            Err(err) => (
                AuditEvent {
                    seq,
                    subject,
                    action: action.to_owned(),
                    actor: actor.clone(),
                    timestamp,
                    outcome: Outcome::Rejected,
                    reason: Some(format!("{}: {err}", err.code())),
                    change: None,
                },
                Err(err),
            ),
        };
        self.events.push(event);
        self.reindex_if_needed();
        result
    }

    fn reindex_if_needed(&mut self) {
        if let Some(AuditEvent {
            change: Some(Change::TasksAdded { date, tasks }),
            ..
        }) = self.events.last()
        {
            for t in tasks {
                self.task_dates.insert(t.task_id.clone(), *date);
            }
        }
    }

    /// Adds freshly ingested tasks, one accepted event per execution date.
    /// System-level: not subject to RACI.
    pub fn add_tasks(
        &mut self,
        tasks: Vec<SamplingTask>,
        actor: &Actor,
        timestamp: Timestamp,
    ) -> Result<usize, WorkflowError> {
        let mut by_date: std::collections::BTreeMap<NaiveDate, Vec<SamplingTask>> =
            Default::default();
        for t in tasks {
            by_date.entry(t.execution_date).or_default().push(t);
        }
        let mut added = 0;
        for (date, batch) in by_date {
            let outcome = self.validate_new_tasks(&batch).map(|()| {
                let n = batch.len();
                (Change::TasksAdded { date, tasks: batch }, n)
            });
            added += self.record(Subject::Worksheet(date), "AddTasks", actor, timestamp, outcome)?;
        }
        Ok(added)
    }

    fn validate_new_tasks(&self, batch: &[SamplingTask]) -> Result<(), WorkflowError> {
        let mut seen = BTreeSet::new();
        for t in batch {
            if self.task_dates.contains_key(&t.task_id) || !seen.insert(&t.task_id) {
                return Err(WorkflowError::DuplicateTask(t.task_id.clone()));
            }
            let fresh = t.status == CheckStatus::Untouched
                && t.version == 0
                && t.execution_time.is_none()
                && t.checked_steps.is_empty();
            if !fresh {
                return Err(WorkflowError::InvalidNewTask(t.task_id.clone()));
            }
        }
        Ok(())
    }

    pub fn check_in(&mut self, req: CheckInRequest) -> Result<SamplingTask, WorkflowError> {
        let subject = Subject::Task(req.task_id.clone());
        let outcome = match self.plan_check_in(&req) {
            Err(WorkflowError::EmptyCheckIn) => return Err(WorkflowError::EmptyCheckIn),
            other => other.map(|change| (change, ())),
        };
        self.record(subject, actions::CHECK_IN, &req.actor, req.timestamp, outcome)?;
        Ok(self.task(req.task_id.as_str()).expect("task exists").clone())
    }

    fn plan_check_in(&self, req: &CheckInRequest) -> Result<Change, WorkflowError> {
        let task = self
            .task(req.task_id.as_str())
            .ok_or_else(|| WorkflowError::UnknownTask(req.task_id.clone()))?;
        let round = &self.state.worksheets[&task.execution_date].round;
        if round.current_phase != Some(RoundPhase::FieldSampling) {
            return Err(WorkflowError::WrongPhase {
                expected: RoundPhase::FieldSampling,
                actual: phase_name(round),
            });
        }
        self.authorize(&req.actor, actions::CHECK_IN)?;
        if let Some(expected) = req.expected_version {
            if expected != task.version {
                return Err(WorkflowError::StaleVersion {
                    expected,
                    actual: task.version,
                });
            }
        }
        self.check_clock(&Subject::Task(task.task_id.clone()), req.timestamp)?;
        if task.status == CheckStatus::Completed {
            return Err(WorkflowError::StatusRegression {
                task: task.task_id.clone(),
                current: task.status,
            });
        }
        let key_steps = self
            .registry
            .method(task.method_id.as_str())
            .map(|m| m.key_steps.as_slice())
            .unwrap_or_default();
        if let Some(step) = req
            .completed_items
            .iter()
            .find(|s| !key_steps.contains(s))
        {
            return Err(WorkflowError::UnknownStep {
                step: step.clone(),
                method: task.method_id.to_string(),
            });
        }
        let new_steps: Vec<String> = req
            .completed_items
            .difference(&task.checked_steps)
            .cloned()
            .collect();
        if new_steps.is_empty() {
            return Err(WorkflowError::EmptyCheckIn);
        }
        let all_checked = key_steps
            .iter()
            .all(|s| task.checked_steps.contains(s) || req.completed_items.contains(s));
        let status = if all_checked {
            CheckStatus::Completed
        } else {
            CheckStatus::Partial
        };
        Ok(Change::CheckedIn {
            task_id: task.task_id.clone(),
            steps: new_steps,
            status,
            execution_time: (status == CheckStatus::Completed).then_some(req.timestamp),
        })
    }

    pub fn advance_phase(
        &mut self,
        date: NaiveDate,
        target: RoundPhase,
        actor: &Actor,
        timestamp: Timestamp,
    ) -> Result<SamplingRound, WorkflowError> {
        let subject = Subject::Round(super::round_id(date));
        let outcome = self
            .plan_advance(date, target, actor, timestamp, &subject)
            .map(|c| (c, ()));
        self.record(subject, "AdvancePhase", actor, timestamp, outcome)?;
        Ok(self.state.worksheets[&date].round.clone())
    }

    fn plan_advance(
        &self,
        date: NaiveDate,
        target: RoundPhase,
        actor: &Actor,
        timestamp: Timestamp,
        subject: &Subject,
    ) -> Result<Change, WorkflowError> {
        let ws = self
            .state
            .worksheets
            .get(&date)
            .ok_or(WorkflowError::UnknownWorksheet(date))?;
        let expected_next = match ws.round.current_phase {
            None => Some(RoundPhase::MaterialPreparation),
            Some(p) => p.successor(),
        };
        if expected_next != Some(target) {
            return Err(WorkflowError::PhaseSkip {
                from: phase_name(&ws.round),
                to: target,
            });
        }
        self.authorize(actor, target.action().as_str())?;
        self.check_clock(subject, timestamp)?;
        if target == RoundPhase::ChariotReturn {
            let unflagged: Vec<TaskId> = ws
                .tasks
                .values()
                .filter(|t| t.status == CheckStatus::Untouched && !self.has_deviation(t))
                .map(|t| t.task_id.clone())
                .collect();
            if !unflagged.is_empty() {
                return Err(WorkflowError::IncompleteSampling { tasks: unflagged });
            }
        }
        Ok(Change::PhaseAdvanced {
            date,
            phase: target,
        })
    }

    fn has_deviation(&self, task: &SamplingTask) -> bool {
        self.state.feedback.iter().any(|f| {
            f.category == FeedbackCategory::Deviation
                && match &f.target {
                    FeedbackTarget::Task(id) => id == &task.task_id,
                    FeedbackTarget::Point(id) => {
                        id == &task.point_id && f.created_at.date() == task.execution_date
                    }
                }
        })
    }

    pub fn record_feedback(&mut self, draft: FeedbackDraft) -> Result<FeedbackEntry, WorkflowError> {
        let subject = match &draft.target {
            FeedbackTarget::Task(id) => Subject::Task(id.clone()),
            FeedbackTarget::Point(id) => Subject::Point(id.clone()),
        };
        let outcome = self.plan_feedback(&draft).map(|entry| {
            (
                Change::FeedbackRecorded {
                    entry: entry.clone(),
                },
                entry,
            )
        });
        self.record(
            subject,
            actions::RECORD_FEEDBACK,
            &draft.author,
            draft.timestamp,
            outcome,
        )
    }

    fn plan_feedback(&self, draft: &FeedbackDraft) -> Result<FeedbackEntry, WorkflowError> {
        if draft.text.trim().is_empty() {
            return Err(WorkflowError::EmptyText);
        }
        let known = match &draft.target {
            FeedbackTarget::Task(id) => self.task_dates.contains_key(id),
            FeedbackTarget::Point(id) => self.registry.point(id.as_str()).is_some(),
        };
        if !known {
            return Err(WorkflowError::UnknownTarget(draft.target.to_string()));
        }
        self.authorize(&draft.author, actions::RECORD_FEEDBACK)?;
        Ok(FeedbackEntry {
            feedback_id: FeedbackId::new(format!("FB-{:05}", self.state.feedback.len() + 1)),
            author: draft.author.id.clone(),
            target: draft.target.clone(),
            text: draft.text.clone(),
            created_at: draft.timestamp,
            category: draft.category,
        })
    }
}

fn phase_name(round: &SamplingRound) -> String {
    round
        .current_phase
        .map_or_else(|| "NotStarted".to_owned(), |p| p.to_string())
}
