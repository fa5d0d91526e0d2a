use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Action, Role};
use crate::ontology::{parse_pattern, KnowledgeBase, Term, APP_PREFIX};

/// Action tokens used by the workflow engine.
pub mod actions {
    pub const PREPARE_MATERIAL: &str = "PrepareMaterial";
    pub const DEPOSIT_BOTTLES: &str = "DepositBottles";
    pub const START_SAMPLING: &str = "StartSampling";
    pub const CHECK_IN: &str = "CheckIn";
    pub const RETURN_CHARIOT: &str = "ReturnChariot";
    pub const RECEIVE_SAMPLES: &str = "ReceiveSamples";
    pub const RECORD_FEEDBACK: &str = "RecordFeedback";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RaciLevel {
    Responsible,
    Accountable,
    Consulted,
    Informed,
    None,
}

impl RaciLevel {
    /// Knowledge-base predicate carrying this level.
    pub fn predicate(&self) -> Option<&'static str> {
        match self {
            RaciLevel::Responsible => Some("raci:responsibleFor"),
            RaciLevel::Accountable => Some("raci:accountableFor"),
            RaciLevel::Consulted => Some("raci:consultedOn"),
            RaciLevel::Informed => Some("raci:informedOf"),
            RaciLevel::None => None,
        }
    }

    pub fn grants_execution(&self) -> bool {
        matches!(self, RaciLevel::Responsible | RaciLevel::Accountable)
    }
}

impl fmt::Display for RaciLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RaciError {
    #[error("unknown action {0}")]
    UnknownAction(Action),
    #[error("action {0} has no Responsible role")]
    NoResponsible(Action),
    #[error("conflicting levels for ({role}, {action})")]
    Conflict { role: Role, action: Action },
}

/// Responsibility assignment over (role, action) pairs. Pairs that are not
/// listed for a known action have level `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaciMatrix {
    entries: BTreeMap<(Role, Action), RaciLevel>,
    actions: BTreeSet<Action>,
}

impl RaciMatrix {
    pub fn new(
        entries: impl IntoIterator<Item = (Role, Action, RaciLevel)>,
    ) -> Result<Self, RaciError> {
        let mut map = BTreeMap::new();
        let mut actions = BTreeSet::new();
        for (role, action, level) in entries {
            actions.insert(action.clone());
            if level == RaciLevel::None {
                continue;
            }
            match map.insert((role.clone(), action.clone()), level) {
                Some(previous) if previous != level => {
                    return Err(RaciError::Conflict { role, action })
                }
                _ => {}
            }
        }
        for action in &actions {
            let has_responsible = map
                .iter()
                .any(|((_, a), l)| a == action && *l == RaciLevel::Responsible);
            if !has_responsible {
                return Err(RaciError::NoResponsible(action.clone()));
            }
        }
        Ok(Self {
            entries: map,
            actions,
        })
    }

    /// Reads `role raci:<level> action` assertions, stripping the `app:` prefix.
    pub fn from_kb(kb: &KnowledgeBase) -> Result<Self, RaciError> {
        let mut entries = Vec::new();
        for level in [
            RaciLevel::Responsible,
            RaciLevel::Accountable,
            RaciLevel::Consulted,
            RaciLevel::Informed,
        ] {
            let predicate = level.predicate().expect("non-None level");
            let pattern = parse_pattern(&format!("?role {predicate} ?action"), None)
                .expect("static pattern");
            for row in kb.query(&pattern) {
                let (Some(Term::Iri(role)), Some(Term::Iri(action))) =
                    (row.get("role"), row.get("action"))
                else {
                    continue;
                };
                let strip = |s: &str| s.strip_prefix(APP_PREFIX).unwrap_or(s).to_owned();
                entries.push((
                    Role::from(strip(role.as_str())),
                    Action::from(strip(action.as_str())),
                    level,
                ));
            }
        }
        Self::new(entries)
    }

    /// Matrix from the bundled ontology.
    pub fn fixture() -> Self {
        Self::from_kb(&crate::ontology::application_ontology()).expect("bundled RACI is valid")
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.actions.iter()
    }

    pub fn level(&self, role: &Role, action: &Action) -> Result<RaciLevel, RaciError> {
        if !self.actions.contains(action) {
            return Err(RaciError::UnknownAction(action.clone()));
        }
        Ok(self
            .entries
            .get(&(role.clone(), action.clone()))
            .copied()
            .unwrap_or(RaciLevel::None))
    }

    /// True iff the role is Responsible or Accountable for the action.
    pub fn can_perform(&self, role: &Role, action: &Action) -> Result<bool, RaciError> {
        self.level(role, action).map(|l| l.grants_execution())
    }
}
