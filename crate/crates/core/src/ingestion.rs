//! Worksheet ingestion from LIMS exports, row-level validation, export of
//! checked worksheets and sample-label decoding.
//!
//! Delimited worksheets are UTF-8, `;`-separated, with a header row:
//!
//! ```text
//! Sampling Zone;Sampling Method;Sampling Point;Sampling Execution Date[;Check Status;Execution Time]
//! ```
//!
//! Rows are numbered from 1 starting with the first record after the header.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{parse_date, MethodId, PointId, Registry, Role, SamplingTask, TaskId, ZoneId};

pub const COL_ZONE: &str = "Sampling Zone";
pub const COL_METHOD: &str = "Sampling Method";
pub const COL_POINT: &str = "Sampling Point";
pub const COL_DATE: &str = "Sampling Execution Date";
pub const COL_STATUS: &str = "Check Status";
pub const COL_EXECUTION_TIME: &str = "Execution Time";
pub const COL_TASK_ID: &str = "Task ID";

pub const REQUIRED_COLUMNS: [&str; 4] = [COL_ZONE, COL_METHOD, COL_POINT, COL_DATE];

const DELIMITER: u8 = b';';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("malformed header, missing column(s): {}", missing.join(", "))]
    MalformedHeader { missing: Vec<String> },
    #[error("structured records must be a JSON array of objects: {0}")]
    InvalidRecords(String),
    #[error("unreadable delimited text: {0}")]
    Delimited(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorksheetFormat {
    /// `;`-separated text with a header row.
    DelimitedText,
    /// JSON array of `{column: value}` objects.
    StructuredRecords,
}

impl WorksheetFormat {
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => WorksheetFormat::StructuredRecords,
            _ => WorksheetFormat::DelimitedText,
        }
    }
}

/// One source row. `defect` records a syntactic problem found while reading;
/// it is reported by [`validate_records`] rather than failing the parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorksheetRecord {
    pub row: usize,
    pub fields: IndexMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect: Option<String>,
}

impl WorksheetRecord {
    pub fn get(&self, column: &str) -> Option<&str> {
        self.fields.get(column).map(|v| v.trim()).filter(|v| !v.is_empty())
    }
}

pub fn parse_worksheet(bytes: &[u8], format: WorksheetFormat) -> Result<Vec<WorksheetRecord>, IngestError> {
    match format {
        WorksheetFormat::DelimitedText => parse_delimited(bytes),
        WorksheetFormat::StructuredRecords => parse_structured(bytes),
    }
}

pub fn read_worksheet_file(path: &Path) -> Result<Vec<WorksheetRecord>, IngestError> {
    let bytes = std::fs::read(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_worksheet(&bytes, WorksheetFormat::for_path(path))
}

fn parse_delimited(bytes: &[u8]) -> Result<Vec<WorksheetRecord>, IngestError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(DELIMITER)
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut rows = reader.byte_records();

    let header: Vec<String> = match rows.next() {
        Some(Ok(record)) => record
            .iter()
            .map(|f| String::from_utf8_lossy(f).trim().to_owned())
            .collect(),
        Some(Err(e)) => return Err(IngestError::Delimited(e.to_string())),
        None => Vec::new(),
    };
    let missing: Vec<String> = REQUIRED_COLUMNS
        .iter()
        .filter(|c| !header.iter().any(|h| h == *c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::MalformedHeader { missing });
    }

    let mut records = Vec::new();
    for (idx, row) in rows.enumerate() {
        let row_number = idx + 1;
        let raw = row.map_err(|e| IngestError::Delimited(e.to_string()))?;
        let mut defect = None;
        if raw.len() != header.len() {
            defect = Some(format!(
                "expected {} fields, found {}",
                header.len(),
                raw.len()
            ));
        }
        let mut fields = IndexMap::new();
        for (name, value) in header.iter().zip(raw.iter()) {
            match std::str::from_utf8(value) {
                Ok(v) => {
                    fields.insert(name.clone(), v.to_owned());
                }
                Err(_) => defect = Some(format!("column `{name}` is not valid UTF-8")),
            }
        }
        records.push(WorksheetRecord {
            row: row_number,
            fields,
            defect,
        });
    }
    Ok(records)
}

fn parse_structured(bytes: &[u8]) -> Result<Vec<WorksheetRecord>, IngestError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| IngestError::InvalidRecords(e.to_string()))?;
    let serde_json::Value::Array(items) = value else {
        return Err(IngestError::InvalidRecords("top-level value is not an array".into()));
    };
    Ok(items
        .into_iter()
        .enumerate()
        .map(|(idx, item)| {
            let row = idx + 1;
            match item {
                serde_json::Value::Object(map) => WorksheetRecord {
                    row,
                    fields: map
                        .into_iter()
                        .map(|(k, v)| {
                            let v = match v {
                                serde_json::Value::String(s) => s,
                                serde_json::Value::Null => String::new(),
                                other => other.to_string(),
                            };
                            (k, v)
                        })
                        .collect(),
                    defect: None,
                },
                other => WorksheetRecord {
                    row,
                    fields: IndexMap::new(),
                    defect: Some(format!("expected an object, found {other}")),
                },
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail")]
pub enum RejectReason {
    Malformed(String),
    MissingColumn(String),
    UnknownZone(String),
    UnknownPoint(String),
    PointZoneMismatch { point: String, zone: String },
    UnknownMethod(String),
    BadDate(String),
    DuplicateTask(String),
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::Malformed(_) => "Malformed",
            RejectReason::MissingColumn(_) => "MissingColumn",
            RejectReason::UnknownZone(_) => "UnknownZone",
            RejectReason::UnknownPoint(_) => "UnknownPoint",
            RejectReason::PointZoneMismatch { .. } => "PointZoneMismatch",
            RejectReason::UnknownMethod(_) => "UnknownMethod",
            RejectReason::BadDate(_) => "BadDate",
            RejectReason::DuplicateTask(_) => "DuplicateTask",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::PointZoneMismatch { point, zone } => {
                write!(f, "PointZoneMismatch({point} not in {zone})")
            }
            RejectReason::Malformed(d)
            | RejectReason::MissingColumn(d)
            | RejectReason::UnknownZone(d)
            | RejectReason::UnknownPoint(d)
            | RejectReason::UnknownMethod(d)
            | RejectReason::BadDate(d)
            | RejectReason::DuplicateTask(d) => write!(f, "{}({d})", self.code()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRejection {
    pub row: usize,
    pub reason: RejectReason,
}

/// `accepted_count + rejected.len()` equals the number of input rows.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted_count: usize,
    pub rejected: Vec<RowRejection>,
    /// Earliest execution date among accepted rows.
    pub source_date: Option<NaiveDate>,
}

impl IngestReport {
    pub fn total(&self) -> usize {
        self.accepted_count + self.rejected.len()
    }
}

pub struct ValidationContext<'a> {
    pub registry: &'a Registry,
    /// Task identities already held elsewhere; rows colliding with them are
    /// rejected as duplicates.
    pub existing: Option<&'a HashSet<TaskId>>,
    pub assigned_role: Role,
}

impl<'a> ValidationContext<'a> {
    pub fn new(registry: &'a Registry) -> Self {
        Self {
            registry,
            existing: None,
            assigned_role: Role::from("Technician"),
        }
    }
}

fn known_column(name: &str) -> bool {
    REQUIRED_COLUMNS.contains(&name)
        || name == COL_STATUS
        || name == COL_EXECUTION_TIME
        || name == COL_TASK_ID
}

/// Turns records into `Untouched`, version-0 tasks. Invalid rows are skipped
/// and listed in the report; valid neighbours are kept.
pub fn validate_records(
    records: &[WorksheetRecord],
    ctx: &ValidationContext<'_>,
) -> (Vec<SamplingTask>, IngestReport) {
    let mut tasks: Vec<SamplingTask> = Vec::new();
    let mut seen: HashSet<TaskId> = HashSet::new();
    let mut report = IngestReport::default();

    for record in records {
        match validate_row(record, ctx) {
            Ok(task) => {
                let duplicate = seen.contains(&task.task_id)
                    || ctx.existing.is_some_and(|e| e.contains(&task.task_id));
                if duplicate {
                    report.rejected.push(RowRejection {
                        row: record.row,
                        reason: RejectReason::DuplicateTask(task.task_id.to_string()),
                    });
                    continue;
                }
                seen.insert(task.task_id.clone());
                report.source_date = Some(match report.source_date {
                    Some(d) => d.min(task.execution_date),
                    None => task.execution_date,
                });
                tasks.push(task);
            }
            Err(reason) => report.rejected.push(RowRejection {
                row: record.row,
                reason,
            }),
        }
    }
    report.accepted_count = tasks.len();
    (tasks, report)
}

fn validate_row(record: &WorksheetRecord, ctx: &ValidationContext<'_>) -> Result<SamplingTask, RejectReason> {
    if let Some(defect) = &record.defect {
        return Err(RejectReason::Malformed(defect.clone()));
    }
    let field = |col: &str| {
        record
            .get(col)
            .ok_or_else(|| RejectReason::MissingColumn(col.to_owned()))
    };
    let zone = field(COL_ZONE)?;
    let method = field(COL_METHOD)?;
    let point = field(COL_POINT)?;
    let date = field(COL_DATE)?;

    if ctx.registry.zone(zone).is_none() {
        return Err(RejectReason::UnknownZone(zone.to_owned()));
    }
    let known_point = ctx
        .registry
        .point(point)
        .ok_or_else(|| RejectReason::UnknownPoint(point.to_owned()))?;
    if known_point.zone_id.as_str() != zone {
        return Err(RejectReason::PointZoneMismatch {
            point: point.to_owned(),
            zone: zone.to_owned(),
        });
    }
    if ctx.registry.method(method).is_none() {
        return Err(RejectReason::UnknownMethod(method.to_owned()));
    }
    let date = parse_date(date).map_err(|_| RejectReason::BadDate(date.to_owned()))?;

    let mut task = SamplingTask::new(
        ZoneId::from(zone),
        PointId::from(point),
        MethodId::from(method),
        date,
        ctx.assigned_role.clone(),
    );
    if let Some(id) = record.get(COL_TASK_ID) {
        task.task_id = TaskId::from(id);
    }
    task.extra = record
        .fields
        .iter()
        .filter(|(k, _)| !known_column(k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(task)
}

/// Tasks whose execution date is `date`, in their original order.
pub fn filter_by_date(tasks: &[SamplingTask], date: NaiveDate) -> Vec<SamplingTask> {
    tasks
        .iter()
        .filter(|t| t.execution_date == date)
        .cloned()
        .collect()
}

/// Delimited export ordered by zone, point, method. Adds `Check Status` and
/// `Execution Time`; a `Task ID` column is added only when some task carries
/// a source-supplied identity, and pass-through columns follow at the end.
pub fn export_worksheet<'a>(tasks: impl IntoIterator<Item = &'a SamplingTask>) -> Vec<u8> {
    let mut tasks: Vec<&SamplingTask> = tasks.into_iter().collect();
    tasks.sort_by(|a, b| {
        (&a.zone_id, &a.point_id, &a.method_id, a.execution_date, &a.task_id).cmp(&(
            &b.zone_id,
            &b.point_id,
            &b.method_id,
            b.execution_date,
            &b.task_id,
        ))
    });
    let custom_ids = tasks
        .iter()
        .any(|t| t.task_id != TaskId::derive(&t.point_id, &t.method_id, t.execution_date));
    let mut extra_columns: Vec<&str> = Vec::new();
    for t in &tasks {
        for k in t.extra.keys() {
            if !extra_columns.contains(&k.as_str()) {
                extra_columns.push(k);
            }
        }
    }

    let mut writer = csv::WriterBuilder::new()
        .delimiter(DELIMITER)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header: Vec<&str> = vec![
        COL_ZONE,
        COL_METHOD,
        COL_POINT,
        COL_DATE,
        COL_STATUS,
        COL_EXECUTION_TIME,
    ];
    if custom_ids {
        header.push(COL_TASK_ID);
    }
    header.extend(&extra_columns);
    writer.write_record(&header).expect("in-memory write");

    for t in tasks {
        let mut row = vec![
            t.zone_id.to_string(),
            t.method_id.to_string(),
            t.point_id.to_string(),
            t.execution_date.format("%Y-%m-%d").to_string(),
            t.status.to_string(),
            t.execution_time.map(|ts| ts.to_string()).unwrap_or_default(),
        ];
        if custom_ids {
            row.push(t.task_id.to_string());
        }
        row.extend(
            extra_columns
                .iter()
                .map(|c| t.extra.get(*c).cloned().unwrap_or_default()),
        );
        writer.write_record(&row).expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

/// Decoded `SITE/ZONE/POINT/YYYY-MM-DD/SEQ` bottle label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLabel {
    pub site: String,
    pub zone_id: ZoneId,
    pub point_id: PointId,
    pub date: NaiveDate,
    pub sequence: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed label: segment {segment} {reason}")]
pub struct MalformedLabel {
    /// 1-based index of the offending segment.
    pub segment: usize,
    pub reason: String,
}

const LABEL_SEGMENTS: usize = 5;

pub fn decode_sample_label(payload: &str) -> Result<SampleLabel, MalformedLabel> {
    let parts: Vec<&str> = payload.trim().split('/').collect();
    let bad = |segment: usize, reason: &str| MalformedLabel {
        segment,
        reason: reason.to_owned(),
    };
    if parts.len() > LABEL_SEGMENTS {
        return Err(bad(LABEL_SEGMENTS + 1, "is unexpected"));
    }
    for i in 0..LABEL_SEGMENTS {
        match parts.get(i) {
            None => return Err(bad(i + 1, "is missing")),
            Some(p) if p.trim().is_empty() => return Err(bad(i + 1, "is empty")),
            Some(_) => {}
        }
    }
    let date = parse_date(parts[3]).map_err(|_| bad(4, "is not a YYYY-MM-DD date"))?;
    let sequence: u32 = parts[4]
        .parse()
        .map_err(|_| bad(5, "is not a sequence number"))?;
    if sequence == 0 {
        return Err(bad(5, "must be at least 1"));
    }
    Ok(SampleLabel {
        site: parts[0].to_owned(),
        zone_id: ZoneId::from(parts[1]),
        point_id: PointId::from(parts[2]),
        date,
        sequence,
    })
}

pub fn encode_sample_label(label: &SampleLabel) -> String {
    format!(
        "{}/{}/{}/{}/{}",
        label.site,
        label.zone_id,
        label.point_id,
        label.date.format("%Y-%m-%d"),
        label.sequence
    )
}
