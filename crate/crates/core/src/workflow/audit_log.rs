//! Append-only audit log, one tab-separated event per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{Actor, AuditEvent, Change, Outcome};

#[derive(Debug, Error)]
pub enum AuditLogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

const FIELDS: usize = 9;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

/// One tab-separated line: seq, timestamp, subject, action, actor id,
/// actor role, outcome, reason, change (JSON). Absent reason and change are
/// empty fields.
pub fn format_event_line(event: &AuditEvent) -> String {
    let outcome = match event.outcome {
        Outcome::Accepted => "Accepted",
        Outcome::Rejected => "Rejected",
    };
    let change = event
        .change
        .as_ref()
        .map(|c| serde_json::to_string(c).expect("changes serialize"))
        .unwrap_or_default();
    [
        event.seq.to_string(),
        event.timestamp.to_string(),
        event.subject.to_string(),
        event.action.clone(),
        event.actor.id.clone(),
        event.actor.role.to_string(),
        outcome.to_owned(),
        event.reason.clone().unwrap_or_default(),
        change,
    ]
    .iter()
    .map(|f| escape(f))
    .collect::<Vec<_>>()
    .join("\t")
}

pub fn parse_event_line(line: &str) -> Result<AuditEvent, String> {
    let fields = line
        .split('\t')
        .map(unescape)
        .collect::<Result<Vec<_>, _>>()?;
    if fields.len() != FIELDS {
        return Err(format!("expected {FIELDS} fields, found {}", fields.len()));
    }
    let non_empty = |s: &String| (!s.is_empty()).then(|| s.clone());
    Ok(AuditEvent {
        seq: fields[0].parse().map_err(|e| format!("seq: {e}"))?,
        timestamp: fields[1].parse().map_err(|e| format!("timestamp: {e}"))?,
        subject: fields[2].parse()?,
        action: fields[3].clone(),
        actor: Actor::new(fields[4].clone(), fields[5].as_str()),
        outcome: match fields[6].as_str() {
            "Accepted" => Outcome::Accepted,
            "Rejected" => Outcome::Rejected,
            other => return Err(format!("unknown outcome `{other}`")),
        },
        reason: non_empty(&fields[7]),
        change: non_empty(&fields[8])
            .map(|c| serde_json::from_str::<Change>(&c))
            .transpose()
            .map_err(|e| format!("change: {e}"))?,
    })
}

/// Reads every event in `path`; a missing file is an empty log.
pub fn read_audit_log(path: &Path) -> Result<Vec<AuditEvent>, AuditLogError> {
    let io = |source| AuditLogError::Io {
        path: path.to_owned(),
        source,
    };
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(e)),
    };
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let event = parse_event_line(&line).map_err(|message| AuditLogError::Corrupt {
            line: i + 1,
            message,
        })?;
        events.push(event);
    }
    Ok(events)
}

pub struct AuditLogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl AuditLogWriter {
    pub fn open(path: &Path) -> Result<Self, AuditLogError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| AuditLogError::Io {
                path: path.to_owned(),
                source,
            })?;
        Ok(Self {
            path: path.to_owned(),
            out: BufWriter::new(file),
        })
    }

    /// Appends and flushes the given events.
    pub fn append<'a>(
        &mut self,
        events: impl IntoIterator<Item = &'a AuditEvent>,
    ) -> Result<(), AuditLogError> {
        let result = (|| {
            for event in events {
                writeln!(self.out, "{}", format_event_line(event))?;
            }
            self.out.flush()?;
            self.out.get_ref().sync_data()
        })();
        result.map_err(|source| AuditLogError::Io {
            path: self.path.clone(),
            source,
        })
    }
}
