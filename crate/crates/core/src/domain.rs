//! Canonical domain types shared by every other module: identifiers, check-in
//! status, sampling points, methods, tasks and feedback, plus the registry that
//! resolves zone/point/method references.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("unknown check status `{0}`")]
    UnknownStatus(String),
    #[error("unknown water type `{0}`")]
    UnknownWaterType(String),
    #[error("unknown feedback category `{0}`")]
    UnknownCategory(String),
    #[error("invalid timestamp `{0}`")]
    BadTimestamp(String),
    #[error("invalid date `{0}` (expected YYYY-MM-DD)")]
    BadDate(String),
    #[error("empty identifier for {0}")]
    EmptyId(&'static str),
    #[error("invalid zone id `{0}` (uppercase alphanumerics and '-' only)")]
    BadZoneId(String),
    #[error("coordinates of point {point} outside the unit square: ({x}, {y})")]
    CoordsOutOfRange { point: String, x: f64, y: f64 },
    #[error("duplicate {kind} `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error("point {point} references unknown zone {zone}")]
    UnknownZone { point: String, zone: String },
    #[error("method {0} has no key steps")]
    NoKeySteps(String),
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Uppercase alphanumeric zone token, e.g. `Z-A`.
    ZoneId
);
string_id!(PointId);
string_id!(MethodId);
string_id!(TaskId);
string_id!(
    /// Organizational role token used for authorization (e.g. `Technician`).
    Role
);
string_id!(
    /// Workflow action governed by the RACI matrix (e.g. `CheckIn`).
    Action
);
string_id!(FeedbackId);

impl TaskId {
    /// Identity used when the source worksheet does not supply one.
    pub fn derive(point: &PointId, method: &MethodId, date: NaiveDate) -> Self {
        Self(format!("{point}-{method}-{}", date.format("%Y-%m-%d")))
    }
}

/// UTC instant with second precision, written as RFC 3339 (`2024-03-05T08:15:00Z`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<Utc>);

impl Timestamp {
    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        Self(truncate_seconds(dt))
    }

    pub fn from_unix(secs: i64) -> Option<Self> {
        DateTime::from_timestamp(secs, 0).map(Self)
    }

    pub fn now() -> Self {
        Self::from_datetime(Utc::now())
    }

    pub fn datetime(&self) -> DateTime<Utc> {
        self.0
    }

    pub fn unix(&self) -> i64 {
        self.0.timestamp()
    }

    pub fn date(&self) -> NaiveDate {
        self.0.date_naive()
    }

    /// Whole seconds elapsed since `earlier` (negative if `earlier` is later).
    pub fn seconds_since(&self, earlier: Timestamp) -> i64 {
        self.unix() - earlier.unix()
    }
}

fn truncate_seconds(dt: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp(dt.timestamp(), 0).expect("in-range timestamp")
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_rfc3339_opts(SecondsFormat::Secs, true))
    }
}

impl FromStr for Timestamp {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DateTime::parse_from_rfc3339(s.trim())
            .map(|dt| Self::from_datetime(dt.with_timezone(&Utc)))
            .map_err(|_| DomainError::BadTimestamp(s.to_owned()))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Strict `YYYY-MM-DD` date parsing. `DD/MM/YYYY` and other layouts are rejected.
pub fn parse_date(s: &str) -> Result<NaiveDate, DomainError> {
    let s = s.trim();
    let well_shaped = s.len() == 10
        && s.bytes().enumerate().all(|(i, b)| match i {
            4 | 7 => b == b'-',
            _ => b.is_ascii_digit(),
        });
    if !well_shaped {
        return Err(DomainError::BadDate(s.to_owned()));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| DomainError::BadDate(s.to_owned()))
}

/// Check-in state of a task. Ordered `Untouched < Partial < Completed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CheckStatus {
    Untouched,
    Partial,
    Completed,
}

impl CheckStatus {
    pub const ALL: [CheckStatus; 3] = [
        CheckStatus::Untouched,
        CheckStatus::Partial,
        CheckStatus::Completed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckStatus::Untouched => "Untouched",
            CheckStatus::Partial => "Partial",
            CheckStatus::Completed => "Completed",
        }
    }
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckStatus {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_check_status(s)
    }
}

/// Case-insensitive match against the three canonical status names.
pub fn parse_check_status(s: &str) -> Result<CheckStatus, DomainError> {
    CheckStatus::ALL
        .into_iter()
        .find(|status| status.as_str().eq_ignore_ascii_case(s.trim()))
        .ok_or_else(|| DomainError::UnknownStatus(s.to_owned()))
}

pub fn compare_status(a: CheckStatus, b: CheckStatus) -> Ordering {
    a.cmp(&b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WaterType {
    PurifiedWater,
    CondensedPurifiedSteam,
}

impl WaterType {
    pub fn as_str(&self) -> &'static str {
        match self {
            WaterType::PurifiedWater => "PurifiedWater",
            WaterType::CondensedPurifiedSteam => "CondensedPurifiedSteam",
        }
    }
}

impl FromStr for WaterType {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "PurifiedWater" => Ok(WaterType::PurifiedWater),
            "CondensedPurifiedSteam" => Ok(WaterType::CondensedPurifiedSteam),
            other => Err(DomainError::UnknownWaterType(other.to_owned())),
        }
    }
}

/// Normalized floor-plan coordinates, both components in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coords {
    pub x: f64,
    pub y: f64,
}

impl Coords {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }

    pub fn euclidean(&self, other: &Coords) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingZone {
    pub zone_id: ZoneId,
    pub name: String,
    #[serde(default)]
    pub floor_plan_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPoint {
    pub point_id: PointId,
    pub zone_id: ZoneId,
    pub coords: Coords,
    pub water_type: WaterType,
    #[serde(default)]
    pub mechanical_notes: String,
    #[serde(default)]
    pub media_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMethod {
    pub method_id: MethodId,
    #[serde(default)]
    pub equipment_list: Vec<String>,
    pub key_steps: Vec<String>,
    #[serde(default)]
    pub media_refs: Vec<String>,
}

/// One worksheet row: a point sampled with a method on a given day.
///
/// `execution_time` is set exactly when `status` is `Completed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingTask {
    pub task_id: TaskId,
    pub zone_id: ZoneId,
    pub point_id: PointId,
    pub method_id: MethodId,
    pub execution_date: NaiveDate,
    pub status: CheckStatus,
    pub execution_time: Option<Timestamp>,
    pub assigned_role: Role,
    pub version: u64,
    /// Key steps checked so far, cumulative across check-ins.
    #[serde(default)]
    pub checked_steps: BTreeSet<String>,
    /// Source columns outside the known worksheet schema, kept verbatim.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub extra: IndexMap<String, String>,
}

impl SamplingTask {
    pub fn new(
        zone_id: ZoneId,
        point_id: PointId,
        method_id: MethodId,
        execution_date: NaiveDate,
        assigned_role: Role,
    ) -> Self {
        Self {
            task_id: TaskId::derive(&point_id, &method_id, execution_date),
            zone_id,
            point_id,
            method_id,
            execution_date,
            status: CheckStatus::Untouched,
            execution_time: None,
            assigned_role,
            version: 0,
            checked_steps: BTreeSet::new(),
            extra: IndexMap::new(),
        }
    }

    pub fn execution_time_consistent(&self) -> bool {
        (self.status == CheckStatus::Completed) == self.execution_time.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeedbackCategory {
    TacitKnowledge,
    ErrorProne,
    Deviation,
    Other,
}

impl FeedbackCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeedbackCategory::TacitKnowledge => "TacitKnowledge",
            FeedbackCategory::ErrorProne => "ErrorProne",
            FeedbackCategory::Deviation => "Deviation",
            FeedbackCategory::Other => "Other",
        }
    }
}

impl FromStr for FeedbackCategory {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            FeedbackCategory::TacitKnowledge,
            FeedbackCategory::ErrorProne,
            FeedbackCategory::Deviation,
            FeedbackCategory::Other,
        ]
        .into_iter()
        .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
        .ok_or_else(|| DomainError::UnknownCategory(s.to_owned()))
    }
}

/// A feedback entry is attached to exactly one task or one point.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id")]
pub enum FeedbackTarget {
    Task(TaskId),
    Point(PointId),
}

impl fmt::Display for FeedbackTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackTarget::Task(id) => write!(f, "task:{id}"),
            FeedbackTarget::Point(id) => write!(f, "point:{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub feedback_id: FeedbackId,
    pub author: String,
    pub target: FeedbackTarget,
    pub text: String,
    pub created_at: Timestamp,
    pub category: FeedbackCategory,
}

/// Zones, points and methods known to the facility. Construction checks
/// uniqueness, zone resolution, coordinate bounds and non-empty key steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Registry {
    zones: BTreeMap<ZoneId, SamplingZone>,
    points: BTreeMap<PointId, SamplingPoint>,
    methods: BTreeMap<MethodId, SamplingMethod>,
}

#[derive(Deserialize)]
struct RegistryFile {
    #[serde(default)]
    zones: Vec<SamplingZone>,
    #[serde(default)]
    points: Vec<SamplingPoint>,
    #[serde(default)]
    methods: Vec<SamplingMethod>,
}

impl<'de> Deserialize<'de> for Registry {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = RegistryFile::deserialize(deserializer)?;
        Registry::new(file.zones, file.points, file.methods).map_err(serde::de::Error::custom)
    }
}

fn valid_zone_token(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '-' || c == '_')
}

impl Registry {
    pub fn new(
        zones: Vec<SamplingZone>,
        points: Vec<SamplingPoint>,
        methods: Vec<SamplingMethod>,
    ) -> Result<Self, DomainError> {
        let mut registry = Registry::default();
        for zone in zones {
            if !valid_zone_token(zone.zone_id.as_str()) {
                return Err(DomainError::BadZoneId(zone.zone_id.to_string()));
            }
            if registry.zones.contains_key(&zone.zone_id) {
                return Err(DomainError::Duplicate {
                    kind: "zone",
                    id: zone.zone_id.to_string(),
                });
            }
            registry.zones.insert(zone.zone_id.clone(), zone);
        }
        for point in points {
            if point.point_id.as_str().is_empty() {
                return Err(DomainError::EmptyId("point"));
            }
            if !point.coords.in_unit_square() {
                return Err(DomainError::CoordsOutOfRange {
                    point: point.point_id.to_string(),
                    x: point.coords.x,
                    y: point.coords.y,
                });
            }
            if !registry.zones.contains_key(&point.zone_id) {
                return Err(DomainError::UnknownZone {
                    point: point.point_id.to_string(),
                    zone: point.zone_id.to_string(),
                });
            }
            if registry.points.contains_key(&point.point_id) {
                return Err(DomainError::Duplicate {
                    kind: "point",
                    id: point.point_id.to_string(),
                });
            }
            registry.points.insert(point.point_id.clone(), point);
        }
        for method in methods {
            if method.method_id.as_str().is_empty() {
                return Err(DomainError::EmptyId("method"));
            }
            if method.key_steps.is_empty() {
                return Err(DomainError::NoKeySteps(method.method_id.to_string()));
            }
            if registry.methods.contains_key(&method.method_id) {
                return Err(DomainError::Duplicate {
                    kind: "method",
                    id: method.method_id.to_string(),
                });
            }
            registry.methods.insert(method.method_id.clone(), method);
        }
        Ok(registry)
    }

    pub fn zone(&self, id: &str) -> Option<&SamplingZone> {
        self.zones.get(id)
    }

    pub fn point(&self, id: &str) -> Option<&SamplingPoint> {
        self.points.get(id)
    }

    pub fn method(&self, id: &str) -> Option<&SamplingMethod> {
        self.methods.get(id)
    }

    pub fn zones(&self) -> impl Iterator<Item = &SamplingZone> {
        self.zones.values()
    }

    pub fn points(&self) -> impl Iterator<Item = &SamplingPoint> {
        self.points.values()
    }

    pub fn methods(&self) -> impl Iterator<Item = &SamplingMethod> {
        self.methods.values()
    }

    pub fn points_in_zone<'a>(&'a self, zone: &'a str) -> impl Iterator<Item = &'a SamplingPoint> {
        self.points
            .values()
            .filter(move |p| p.zone_id.as_str() == zone)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            zones: Vec<&'a SamplingZone>,
            points: Vec<&'a SamplingPoint>,
            methods: Vec<&'a SamplingMethod>,
        }
        serde_json::to_string_pretty(&Out {
            zones: self.zones.values().collect(),
            points: self.points.values().collect(),
            methods: self.methods.values().collect(),
        })
        .expect("registry serializes")
    }
}
