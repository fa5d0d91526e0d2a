//! Typed knowledge base: a class hierarchy rooted in BFO, properties with
//! domain/range constraints, individuals, assertions and instantiable
//! templates. Reasoning is limited to subsumption plus domain/range checks.

mod bfo;
mod format;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::parse_date;

pub use bfo::{app_iri, application_ontology, load_bfo_skeleton, populate_from_registry, APP_PREFIX};
pub use format::{
    extend_kb, load_kb, parse_kb, parse_pattern, save_kb, write_kb, KbFileError, ParseError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OntologyError {
    #[error("class {0} already exists")]
    DuplicateClass(Iri),
    #[error("class {class} names unknown parent {parent}")]
    UnknownParent { class: Iri, parent: Iri },
    #[error("unknown class {0}")]
    UnknownClass(Iri),
    #[error("adding parent {parent} to {class} would create a cycle")]
    CycleDetected { class: Iri, parent: Iri },
    #[error("class {class} at level {level} cannot have parent {parent} at lower level {parent_level}")]
    LevelViolation {
        class: Iri,
        level: Level,
        parent: Iri,
        parent_level: Level,
    },
    #[error("property {0} already exists")]
    DuplicateProperty(Iri),
    #[error("unknown predicate {0}")]
    UnknownPredicate(Iri),
    #[error("individual {0} already exists")]
    DuplicateIndividual(Iri),
    #[error("unknown individual {0}")]
    UnknownIndividual(Iri),
    #[error("individual {0} needs at least one class")]
    NoClasses(Iri),
    #[error("{subject} is not inferred to be a {domain} (domain of {predicate})")]
    DomainViolation {
        subject: Iri,
        predicate: Iri,
        domain: Iri,
    },
    #[error("object {object} does not satisfy range {range} of {predicate}")]
    RangeViolation {
        predicate: Iri,
        object: String,
        range: String,
    },
    #[error("template {0} already exists")]
    DuplicateTemplate(String),
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("template {template} uses undeclared slot ?{slot}")]
    UndeclaredSlot { template: String, slot: String },
    #[error("missing binding for slot ?{0}")]
    MissingSlot(String),
    #[error("slot ?{slot} must be bound to an IRI in {position} position")]
    BadBinding { slot: String, position: &'static str },
}

/// Namespaced identifier such as `bfo:entity` or `app:P-101`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Iri(String);

impl Iri {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<String> for Iri {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<&str> for Iri {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl std::borrow::Borrow<str> for Iri {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Ontology tier. `Top < Mid < Domain < Application`; a parent is never at a
/// lower tier than its child.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    Top,
    Mid,
    Domain,
    Application,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Top => "Top",
            Level::Mid => "Mid",
            Level::Domain => "Domain",
            Level::Application => "Application",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Top" => Ok(Level::Top),
            "Mid" => Ok(Level::Mid),
            "Domain" => Ok(Level::Domain),
            "Application" => Ok(Level::Application),
            other => Err(format!("unknown level `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    pub iri: Iri,
    pub parents: BTreeSet<Iri>,
    pub level: Level,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PropertyKind {
    Object,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LiteralType {
    String,
    Integer,
    Decimal,
    Date,
    Boolean,
}

impl LiteralType {
    pub fn as_str(&self) -> &'static str {
        match self {
            LiteralType::String => "string",
            LiteralType::Integer => "integer",
            LiteralType::Decimal => "decimal",
            LiteralType::Date => "date",
            LiteralType::Boolean => "boolean",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        let s = s.strip_prefix("xsd:").unwrap_or(s);
        match s {
            "string" => Some(LiteralType::String),
            "integer" => Some(LiteralType::Integer),
            "decimal" => Some(LiteralType::Decimal),
            "date" => Some(LiteralType::Date),
            "boolean" => Some(LiteralType::Boolean),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Range {
    Class(Iri),
    Datatype(LiteralType),
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Range::Class(iri) => write!(f, "{iri}"),
            Range::Datatype(t) => f.write_str(t.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyDef {
    pub iri: Iri,
    pub kind: PropertyKind,
    pub domain: Iri,
    pub range: Range,
}

/// Typed literal. Decimals keep their source text so that equality and
/// ordering stay exact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Literal {
    String(String),
    Integer(i64),
    Decimal(String),
    Date(NaiveDate),
    Boolean(bool),
}

impl Literal {
    pub fn literal_type(&self) -> LiteralType {
        match self {
            Literal::String(_) => LiteralType::String,
            Literal::Integer(_) => LiteralType::Integer,
            Literal::Decimal(_) => LiteralType::Decimal,
            Literal::Date(_) => LiteralType::Date,
            Literal::Boolean(_) => LiteralType::Boolean,
        }
    }

    pub fn parse(lexical: &str, ty: LiteralType) -> Result<Self, String> {
        let bad = || format!("`{lexical}` is not a valid {}", ty.as_str());
        match ty {
            LiteralType::String => Ok(Literal::String(lexical.to_owned())),
            LiteralType::Integer => lexical.parse().map(Literal::Integer).map_err(|_| bad()),
            LiteralType::Decimal => {
                let digits = lexical.strip_prefix('-').unwrap_or(lexical);
                let (int, frac) = digits.split_once('.').unwrap_or((digits, "0"));
                let ok = !int.is_empty()
                    && !frac.is_empty()
                    && int.bytes().all(|b| b.is_ascii_digit())
                    && frac.bytes().all(|b| b.is_ascii_digit());
                if ok {
                    Ok(Literal::Decimal(lexical.to_owned()))
                } else {
                    Err(bad())
                }
            }
            LiteralType::Date => parse_date(lexical).map(Literal::Date).map_err(|_| bad()),
            LiteralType::Boolean => match lexical {
                "true" => Ok(Literal::Boolean(true)),
                "false" => Ok(Literal::Boolean(false)),
                _ => Err(bad()),
            },
        }
    }

    pub fn lexical(&self) -> String {
        match self {
            Literal::String(s) | Literal::Decimal(s) => s.clone(),
            Literal::Integer(i) => i.to_string(),
            Literal::Date(d) => d.format("%Y-%m-%d").to_string(),
            Literal::Boolean(b) => b.to_string(),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let escaped = self.lexical().replace('\\', "\\\\").replace('"', "\\\"");
        write!(f, "\"{escaped}\"^^{}", self.literal_type().as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Iri(Iri),
    Literal(Literal),
}

impl Term {
    pub fn iri(s: &str) -> Self {
        Term::Iri(Iri::from(s))
    }

    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(iri) => Some(iri),
            Term::Literal(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(iri) => write!(f, "{iri}"),
            Term::Literal(lit) => write!(f, "{lit}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Individual {
    pub iri: Iri,
    pub classes: BTreeSet<Iri>,
}

/// Subject-predicate-object statement. Derived ordering is the query order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Assertion {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Term,
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}

/// A position in a query or template pattern: a variable/slot or a constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PatternTerm {
    Var(String),
    Const(Term),
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Var(name) => write!(f, "?{name}"),
            PatternTerm::Const(term) => write!(f, "{term}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn new(subject: PatternTerm, predicate: PatternTerm, object: PatternTerm) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }

    fn vars(&self) -> impl Iterator<Item = &str> {
        [&self.subject, &self.predicate, &self.object]
            .into_iter()
            .filter_map(|t| match t {
                PatternTerm::Var(v) => Some(v.as_str()),
                PatternTerm::Const(_) => None,
            })
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub slots: Vec<String>,
    pub patterns: Vec<TriplePattern>,
}

pub type Bindings = BTreeMap<String, Term>;

/// Problems reported by [`KnowledgeBase::check_consistency`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Finding {
    /// Classes forming one strongly connected component of the parent graph.
    Cycle(BTreeSet<Iri>),
    DanglingIri {
        owner: String,
        reference: Iri,
    },
    DomainViolation(Assertion),
    RangeViolation(Assertion),
    IndividualWithoutClasses(Iri),
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::Cycle(classes) => {
                let names: Vec<_> = classes.iter().map(Iri::as_str).collect();
                write!(f, "cycle: {}", names.join(", "))
            }
            Finding::DanglingIri { owner, reference } => {
                write!(f, "dangling: {owner} -> {reference}")
            }
            Finding::DomainViolation(a) => write!(f, "domain violation: {a}"),
            Finding::RangeViolation(a) => write!(f, "range violation: {a}"),
            Finding::IndividualWithoutClasses(iri) => write!(f, "no classes: {iri}"),
        }
    }
}

/// Classes, properties, individuals, assertions and templates.
///
/// Every mutating method validates before touching state, so a failed call
/// leaves the base unchanged.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    classes: BTreeMap<Iri, ClassDef>,
    properties: BTreeMap<Iri, PropertyDef>,
    individuals: BTreeMap<Iri, Individual>,
    assertions: BTreeSet<Assertion>,
    templates: BTreeMap<String, Template>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assemble a base without any validation. Used to inspect damaged data
    /// with [`check_consistency`](Self::check_consistency).
    pub fn from_parts_unchecked(
        classes: impl IntoIterator<Item = ClassDef>,
        properties: impl IntoIterator<Item = PropertyDef>,
        individuals: impl IntoIterator<Item = Individual>,
        assertions: impl IntoIterator<Item = Assertion>,
        templates: impl IntoIterator<Item = Template>,
    ) -> Self {
        Self {
            classes: classes.into_iter().map(|c| (c.iri.clone(), c)).collect(),
            properties: properties.into_iter().map(|p| (p.iri.clone(), p)).collect(),
            individuals: individuals.into_iter().map(|i| (i.iri.clone(), i)).collect(),
            assertions: assertions.into_iter().collect(),
            templates: templates.into_iter().map(|t| (t.id.clone(), t)).collect(),
        }
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassDef> {
        self.classes.values()
    }

    pub fn class(&self, iri: &str) -> Option<&ClassDef> {
        self.classes.get(iri)
    }

    pub fn properties(&self) -> impl Iterator<Item = &PropertyDef> {
        self.properties.values()
    }

    pub fn property(&self, iri: &str) -> Option<&PropertyDef> {
        self.properties.get(iri)
    }

    pub fn individuals(&self) -> impl Iterator<Item = &Individual> {
        self.individuals.values()
    }

    pub fn individual(&self, iri: &str) -> Option<&Individual> {
        self.individuals.get(iri)
    }

    pub fn assertions(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter()
    }

    pub fn templates(&self) -> impl Iterator<Item = &Template> {
        self.templates.values()
    }

    pub fn template(&self, id: &str) -> Option<&Template> {
        self.templates.get(id)
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
            && self.properties.is_empty()
            && self.individuals.is_empty()
            && self.assertions.is_empty()
            && self.templates.is_empty()
    }

    /// SHA-256 over the canonical text serialization.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(write_kb(self).as_bytes()))
    }

    pub fn add_class(
        &mut self,
        iri: impl Into<Iri>,
        parents: impl IntoIterator<Item = Iri>,
        level: Level,
    ) -> Result<(), OntologyError> {
        let iri = iri.into();
        let parents: BTreeSet<Iri> = parents.into_iter().collect();
        if parents.contains(&iri) {
            return Err(OntologyError::CycleDetected {
                class: iri.clone(),
                parent: iri,
            });
        }
        if self.classes.contains_key(&iri) {
            return Err(OntologyError::DuplicateClass(iri));
        }
        for parent in &parents {
            let def = self
                .classes
                .get(parent)
                .ok_or_else(|| OntologyError::UnknownParent {
                    class: iri.clone(),
                    parent: parent.clone(),
                })?;
            if def.level > level {
                return Err(OntologyError::LevelViolation {
                    class: iri.clone(),
                    level,
                    parent: parent.clone(),
                    parent_level: def.level,
                });
            }
        }
        self.classes.insert(
            iri.clone(),
            ClassDef {
                iri,
                parents,
                level,
            },
        );
        Ok(())
    }

    /// Adds a further parent edge to an existing class (multiple inheritance).
    pub fn add_parent(&mut self, class: &Iri, parent: &Iri) -> Result<(), OntologyError> {
        let child_level = self
            .classes
            .get(class)
            .ok_or_else(|| OntologyError::UnknownClass(class.clone()))?
            .level;
        let parent_level = self
            .classes
            .get(parent)
            .ok_or_else(|| OntologyError::UnknownParent {
                class: class.clone(),
                parent: parent.clone(),
            })?
            .level;
        // The edge closes a cycle iff `class` is already an ancestor of `parent`.
        if class == parent || self.ancestors(parent).contains(class) {
            return Err(OntologyError::CycleDetected {
                class: class.clone(),
                parent: parent.clone(),
            });
        }
        if parent_level > child_level {
            return Err(OntologyError::LevelViolation {
                class: class.clone(),
                level: child_level,
                parent: parent.clone(),
                parent_level,
            });
        }
        self.classes
            .get_mut(class)
            .expect("checked above")
            .parents
            .insert(parent.clone());
        Ok(())
    }

    pub fn add_property(
        &mut self,
        iri: impl Into<Iri>,
        kind: PropertyKind,
        domain: impl Into<Iri>,
        range: Range,
    ) -> Result<(), OntologyError> {
        let iri = iri.into();
        let domain = domain.into();
        if self.properties.contains_key(&iri) {
            return Err(OntologyError::DuplicateProperty(iri));
        }
        if !self.classes.contains_key(&domain) {
            return Err(OntologyError::UnknownClass(domain));
        }
        match (&range, kind) {
            (Range::Class(c), PropertyKind::Object) => {
                if !self.classes.contains_key(c) {
                    return Err(OntologyError::UnknownClass(c.clone()));
                }
            }
            (Range::Datatype(_), PropertyKind::Data) => {}
            _ => {
                return Err(OntologyError::RangeViolation {
                    predicate: iri,
                    object: "<declaration>".into(),
                    range: range.to_string(),
                })
            }
        }
        self.properties.insert(
            iri.clone(),
            PropertyDef {
                iri,
                kind,
                domain,
                range,
            },
        );
        Ok(())
    }

    pub fn assert_individual(
        &mut self,
        iri: impl Into<Iri>,
        classes: impl IntoIterator<Item = Iri>,
    ) -> Result<(), OntologyError> {
        let iri = iri.into();
        let classes: BTreeSet<Iri> = classes.into_iter().collect();
        if self.individuals.contains_key(&iri) {
            return Err(OntologyError::DuplicateIndividual(iri));
        }
        if classes.is_empty() {
            return Err(OntologyError::NoClasses(iri));
        }
        if let Some(unknown) = classes.iter().find(|c| !self.classes.contains_key(*c)) {
            return Err(OntologyError::UnknownClass(unknown.clone()));
        }
        self.individuals
            .insert(iri.clone(), Individual { iri, classes });
        Ok(())
    }

    /// Stores the assertion after checking domain and range against the
    /// inferred classes of the subject and object.
    pub fn assert_relation(
        &mut self,
        subject: impl Into<Iri>,
        predicate: impl Into<Iri>,
        object: Term,
    ) -> Result<(), OntologyError> {
        let assertion = Assertion {
            subject: subject.into(),
            predicate: predicate.into(),
            object,
        };
        self.check_assertion(&assertion)?;
        self.assertions.insert(assertion);
        Ok(())
    }

    fn check_assertion(&self, a: &Assertion) -> Result<(), OntologyError> {
        let prop = self
            .properties
            .get(&a.predicate)
            .ok_or_else(|| OntologyError::UnknownPredicate(a.predicate.clone()))?;
        if !self.individuals.contains_key(&a.subject) {
            return Err(OntologyError::UnknownIndividual(a.subject.clone()));
        }
        if !self.inferred_classes(&a.subject).contains(&prop.domain) {
            return Err(OntologyError::DomainViolation {
                subject: a.subject.clone(),
                predicate: a.predicate.clone(),
                domain: prop.domain.clone(),
            });
        }
        if !self.satisfies_range(&a.object, &prop.range) {
            return Err(OntologyError::RangeViolation {
                predicate: a.predicate.clone(),
                object: a.object.to_string(),
                range: prop.range.to_string(),
            });
        }
        Ok(())
    }

    fn satisfies_range(&self, object: &Term, range: &Range) -> bool {
        match (object, range) {
            (Term::Iri(obj), Range::Class(class)) => {
                self.individuals.contains_key(obj) && self.inferred_classes(obj).contains(class)
            }
            (Term::Literal(lit), Range::Datatype(ty)) => lit.literal_type() == *ty,
            _ => false,
        }
    }

    /// Reflexive-transitive ancestor set. Unknown parents are skipped, so this
    /// also terminates on damaged graphs.
    fn ancestors(&self, class: &Iri) -> BTreeSet<Iri> {
        let mut seen = BTreeSet::from([class.clone()]);
        let mut queue = VecDeque::from([class]);
        while let Some(current) = queue.pop_front() {
            let Some(def) = self.classes.get(current) else {
                continue;
            };
            for parent in &def.parents {
                if seen.insert(parent.clone()) {
                    queue.push_back(parent);
                }
            }
        }
        seen
    }

    pub fn subclass_closure(&self, class: &Iri) -> Result<BTreeSet<Iri>, OntologyError> {
        if !self.classes.contains_key(class) {
            return Err(OntologyError::UnknownClass(class.clone()));
        }
        Ok(self.ancestors(class))
    }

    /// Union of the closures of an individual's asserted classes.
    pub fn inferred_classes(&self, individual: &Iri) -> BTreeSet<Iri> {
        self.individuals
            .get(individual)
            .map(|ind| {
                ind.classes
                    .iter()
                    .flat_map(|c| self.ancestors(c))
                    .collect()
            })
            .unwrap_or_default()
    }

    fn descendants(&self, class: &Iri) -> BTreeSet<Iri> {
        let mut children: HashMap<&Iri, Vec<&Iri>> = HashMap::new();
        for def in self.classes.values() {
            for parent in &def.parents {
                children.entry(parent).or_default().push(&def.iri);
            }
        }
        let mut seen = BTreeSet::from([class.clone()]);
        let mut queue = VecDeque::from([class]);
        while let Some(current) = queue.pop_front() {
            for &child in children.get(current).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(child.clone()) {
                    queue.push_back(child);
                }
            }
        }
        seen
    }

    /// Direct members, or with `inferred` every individual with an asserted
    /// class somewhere below `class`.
    pub fn instances_of(&self, class: &Iri, inferred: bool) -> Result<BTreeSet<Iri>, OntologyError> {
        if !self.classes.contains_key(class) {
            return Err(OntologyError::UnknownClass(class.clone()));
        }
        let members = if inferred {
            self.descendants(class)
        } else {
            BTreeSet::from([class.clone()])
        };
        Ok(self
            .individuals
            .values()
            .filter(|ind| ind.classes.iter().any(|c| members.contains(c)))
            .map(|ind| ind.iri.clone())
            .collect())
    }

    /// All assertions matching the pattern, in (subject, predicate, object) order.
    pub fn query(&self, pattern: &TriplePattern) -> Vec<Bindings> {
        self.assertions
            .iter()
            .filter_map(|a| {
                let mut bindings = Bindings::new();
                let subject = Term::Iri(a.subject.clone());
                let predicate = Term::Iri(a.predicate.clone());
                (match_term(&pattern.subject, &subject, &mut bindings)
                    && match_term(&pattern.predicate, &predicate, &mut bindings)
                    && match_term(&pattern.object, &a.object, &mut bindings))
                .then_some(bindings)
            })
            .collect()
    }

    pub fn add_template(&mut self, template: Template) -> Result<(), OntologyError> {
        if self.templates.contains_key(&template.id) {
            return Err(OntologyError::DuplicateTemplate(template.id));
        }
        for pattern in &template.patterns {
            if let Some(slot) = pattern.vars().find(|v| !template.slots.iter().any(|s| s == v)) {
                return Err(OntologyError::UndeclaredSlot {
                    template: template.id.clone(),
                    slot: slot.to_owned(),
                });
            }
        }
        self.templates.insert(template.id.clone(), template);
        Ok(())
    }

    /// Grounds every pattern of the template and inserts the results. Either
    /// all assertions are added or none are.
    pub fn instantiate_template(
        &mut self,
        template_id: &str,
        bindings: &Bindings,
    ) -> Result<Vec<Assertion>, OntologyError> {
        let template = self
            .templates
            .get(template_id)
            .ok_or_else(|| OntologyError::UnknownTemplate(template_id.to_owned()))?;
        if let Some(missing) = template.slots.iter().find(|s| !bindings.contains_key(*s)) {
            return Err(OntologyError::MissingSlot(missing.clone()));
        }
        let grounded = template
            .patterns
            .iter()
            .map(|p| ground(p, bindings))
            .collect::<Result<Vec<_>, _>>()?;

        let mut staged = self.clone();
        for a in &grounded {
            staged.check_assertion(a)?;
            staged.assertions.insert(a.clone());
        }
        *self = staged;
        Ok(grounded)
    }

    pub fn check_consistency(&self) -> Vec<Finding> {
        let mut findings = Vec::new();

        let mut graph = DiGraph::<&Iri, ()>::new();
        let nodes: HashMap<&Iri, _> = self
            .classes
            .keys()
            .map(|iri| (iri, graph.add_node(iri)))
            .collect();
        for def in self.classes.values() {
            for parent in &def.parents {
                match nodes.get(parent) {
                    Some(&p) => {
                        graph.add_edge(nodes[&def.iri], p, ());
                    }
                    None => findings.push(Finding::DanglingIri {
                        owner: format!("class {}", def.iri),
                        reference: parent.clone(),
                    }),
                }
            }
        }
        for scc in tarjan_scc(&graph) {
            let cyclic = scc.len() > 1 || graph.contains_edge(scc[0], scc[0]);
            if cyclic {
                findings.push(Finding::Cycle(
                    scc.iter().map(|&n| graph[n].clone()).collect(),
                ));
            }
        }

        for prop in self.properties.values() {
            if !self.classes.contains_key(&prop.domain) {
                findings.push(Finding::DanglingIri {
                    owner: format!("property {}", prop.iri),
                    reference: prop.domain.clone(),
                });
            }
            if let Range::Class(c) = &prop.range {
                if !self.classes.contains_key(c) {
                    findings.push(Finding::DanglingIri {
                        owner: format!("property {}", prop.iri),
                        reference: c.clone(),
                    });
                }
            }
        }

        for ind in self.individuals.values() {
            if ind.classes.is_empty() {
                findings.push(Finding::IndividualWithoutClasses(ind.iri.clone()));
            }
            for c in ind.classes.iter().filter(|c| !self.classes.contains_key(*c)) {
                findings.push(Finding::DanglingIri {
                    owner: format!("individual {}", ind.iri),
                    reference: c.clone(),
                });
            }
        }

        for a in &self.assertions {
            let owner = format!("assertion {a}");
            let Some(prop) = self.properties.get(&a.predicate) else {
                findings.push(Finding::DanglingIri {
                    owner,
                    reference: a.predicate.clone(),
                });
                continue;
            };
            if !self.individuals.contains_key(&a.subject) {
                findings.push(Finding::DanglingIri {
                    owner: owner.clone(),
                    reference: a.subject.clone(),
                });
            } else if !self.inferred_classes(&a.subject).contains(&prop.domain) {
                findings.push(Finding::DomainViolation(a.clone()));
            }
            match &a.object {
                Term::Iri(obj)
                    if prop.kind == PropertyKind::Object && !self.individuals.contains_key(obj) =>
                {
                    findings.push(Finding::DanglingIri {
                        owner,
                        reference: obj.clone(),
                    });
                }
                object => {
                    if !self.satisfies_range(object, &prop.range) {
                        findings.push(Finding::RangeViolation(a.clone()));
                    }
                }
            }
        }

        findings.sort();
        findings
    }
}

fn match_term(pattern: &PatternTerm, value: &Term, bindings: &mut Bindings) -> bool {
    match pattern {
        PatternTerm::Const(c) => c == value,
        PatternTerm::Var(name) => match bindings.get(name) {
            Some(bound) => bound == value,
            None => {
                bindings.insert(name.clone(), value.clone());
                true
            }
        },
    }
}

fn ground(pattern: &TriplePattern, bindings: &Bindings) -> Result<Assertion, OntologyError> {
    let resolve = |t: &PatternTerm| match t {
        PatternTerm::Const(c) => c.clone(),
        PatternTerm::Var(v) => bindings[v].clone(),
    };
    let iri_at = |t: &PatternTerm, position: &'static str| match resolve(t) {
        Term::Iri(iri) => Ok(iri),
        Term::Literal(_) => Err(OntologyError::BadBinding {
            slot: match t {
                PatternTerm::Var(v) => v.clone(),
                PatternTerm::Const(c) => c.to_string(),
            },
            position,
        }),
    };
    Ok(Assertion {
        subject: iri_at(&pattern.subject, "subject")?,
        predicate: iri_at(&pattern.predicate, "predicate")?,
        object: resolve(&pattern.object),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iri(s: &str) -> Iri {
        Iri::from(s)
    }

    fn sample_kb() -> KnowledgeBase {
        let mut kb = load_bfo_skeleton();
        kb.add_class("app:SamplingZone", [iri("bfo:site")], Level::Application)
            .unwrap();
        kb.add_class("app:SamplingPoint", [iri("bfo:object")], Level::Application)
            .unwrap();
        kb.add_property(
            "app:locatedInZone",
            PropertyKind::Object,
            "app:SamplingPoint",
            Range::Class(iri("app:SamplingZone")),
        )
        .unwrap();
        kb.add_property(
            "app:waterType",
            PropertyKind::Data,
            "app:SamplingPoint",
            Range::Datatype(LiteralType::String),
        )
        .unwrap();
        kb.assert_individual("app:P-101", [iri("app:SamplingPoint")])
            .unwrap();
        kb.assert_individual("app:Z-A", [iri("app:SamplingZone")])
            .unwrap();
        kb
    }

    #[test]
    fn skeleton_structure() {
        let kb = load_bfo_skeleton();
        assert_eq!(
            kb.class("bfo:continuant").unwrap().parents,
            BTreeSet::from([iri("bfo:entity")])
        );
        let closure = kb.subclass_closure(&iri("bfo:process")).unwrap();
        for c in ["bfo:process", "bfo:occurrent", "bfo:entity"] {
            assert!(closure.contains(c));
        }
        assert_eq!(
            kb.subclass_closure(&iri("bfo:entity")).unwrap(),
            BTreeSet::from([iri("bfo:entity")])
        );
        assert!(kb.check_consistency().is_empty());
        assert!(kb.classes().all(|c| c.level == Level::Top));
    }

    #[test]
    fn add_class_rules() {
        let mut kb = load_bfo_skeleton();
        kb.add_class("app:SamplingProcess", [iri("bfo:process")], Level::Application)
            .unwrap();
        let closure = kb.subclass_closure(&iri("app:SamplingProcess")).unwrap();
        assert!(closure.contains("bfo:occurrent"));

        assert_eq!(
            kb.add_class("app:SamplingProcess", [iri("bfo:process")], Level::Application),
            Err(OntologyError::DuplicateClass(iri("app:SamplingProcess")))
        );
        assert!(matches!(
            kb.add_class("app:Loop", [iri("app:Loop")], Level::Application),
            Err(OntologyError::CycleDetected { .. })
        ));
        assert!(matches!(
            kb.add_class("app:X", [iri("app:Nope")], Level::Application),
            Err(OntologyError::UnknownParent { .. })
        ));
        assert!(matches!(
            kb.add_class("mid:Y", [iri("app:SamplingProcess")], Level::Mid),
            Err(OntologyError::LevelViolation { .. })
        ));
        // Re-parenting the root under a descendant closes a cycle.
        assert!(matches!(
            kb.add_parent(&iri("bfo:entity"), &iri("app:SamplingProcess")),
            Err(OntologyError::CycleDetected { .. })
        ));
    }

    #[test]
    fn individuals() {
        let mut kb = sample_kb();
        assert!(kb
            .instances_of(&iri("app:SamplingPoint"), false)
            .unwrap()
            .contains("app:P-101"));
        assert_eq!(
            kb.assert_individual("app:P-102", [iri("app:Unknown")]),
            Err(OntologyError::UnknownClass(iri("app:Unknown")))
        );
        assert_eq!(
            kb.assert_individual("app:P-101", [iri("app:SamplingPoint")]),
            Err(OntologyError::DuplicateIndividual(iri("app:P-101")))
        );
        let everything = kb.instances_of(&iri("bfo:entity"), true).unwrap();
        assert_eq!(everything.len(), kb.individuals().count());
    }

    #[test]
    fn relation_domain_and_range() {
        let mut kb = sample_kb();
        kb.assert_relation("app:P-101", "app:locatedInZone", Term::iri("app:Z-A"))
            .unwrap();
        assert!(matches!(
            kb.assert_relation("app:Z-A", "app:locatedInZone", Term::iri("app:Z-A")),
            Err(OntologyError::DomainViolation { .. })
        ));
        assert!(matches!(
            kb.assert_relation(
                "app:P-101",
                "app:locatedInZone",
                Term::Literal(Literal::String("Z-A".into()))
            ),
            Err(OntologyError::RangeViolation { .. })
        ));
        assert!(matches!(
            kb.assert_relation("app:P-101", "app:nope", Term::iri("app:Z-A")),
            Err(OntologyError::UnknownPredicate(_))
        ));
    }

    #[test]
    fn query_patterns() {
        let mut kb = sample_kb();
        kb.assert_individual("app:P-102", [iri("app:SamplingPoint")])
            .unwrap();
        kb.assert_individual("app:Z-B", [iri("app:SamplingZone")])
            .unwrap();
        kb.assert_relation("app:P-102", "app:locatedInZone", Term::iri("app:Z-A"))
            .unwrap();
        kb.assert_relation("app:P-101", "app:locatedInZone", Term::iri("app:Z-A"))
            .unwrap();
        kb.assert_relation(
            "app:P-101",
            "app:waterType",
            Term::Literal(Literal::String("PurifiedWater".into())),
        )
        .unwrap();

        let pattern = parse_pattern("?p locatedInZone Z-A", Some(APP_PREFIX)).unwrap();
        let rows = kb.query(&pattern);
        let points: Vec<_> = rows.iter().map(|b| b["p"].to_string()).collect();
        assert_eq!(points, ["app:P-101", "app:P-102"]);

        let ground = parse_pattern("app:P-101 app:locatedInZone app:Z-A", None).unwrap();
        assert_eq!(kb.query(&ground), vec![Bindings::new()]);

        let all = parse_pattern("?s ?p ?o", None).unwrap();
        assert_eq!(kb.query(&all).len(), kb.assertions().count());

        let repeated = parse_pattern("?x ?p ?x", None).unwrap();
        assert!(kb.query(&repeated).is_empty());
    }

    #[test]
    fn template_atomicity() {
        let mut kb = sample_kb();
        kb.add_template(Template {
            id: "placement".into(),
            slots: vec!["point".into(), "zone".into()],
            patterns: vec![
                parse_pattern("?point app:locatedInZone ?zone", None).unwrap(),
                parse_pattern("?zone app:locatedInZone ?zone", None).unwrap(),
            ],
        })
        .unwrap();
        let before = kb.content_hash();
        let bindings = Bindings::from([
            ("point".into(), Term::iri("app:P-101")),
            ("zone".into(), Term::iri("app:Z-A")),
        ]);
        // First pattern is fine, second violates the domain.
        assert!(matches!(
            kb.instantiate_template("placement", &bindings),
            Err(OntologyError::DomainViolation { .. })
        ));
        assert_eq!(kb.content_hash(), before);

        let partial = Bindings::from([("point".into(), Term::iri("app:P-101"))]);
        assert_eq!(
            kb.instantiate_template("placement", &partial),
            Err(OntologyError::MissingSlot("zone".into()))
        );
        assert_eq!(kb.content_hash(), before);

        assert!(matches!(
            kb.add_template(Template {
                id: "bad".into(),
                slots: vec![],
                patterns: vec![parse_pattern("?a app:locatedInZone ?b", None).unwrap()],
            }),
            Err(OntologyError::UndeclaredSlot { .. })
        ));
    }

    #[test]
    fn consistency_findings() {
        let kb = KnowledgeBase::from_parts_unchecked(
            [
                ClassDef {
                    iri: iri("a"),
                    parents: BTreeSet::from([iri("ghost")]),
                    level: Level::Top,
                },
                ClassDef {
                    iri: iri("b"),
                    parents: BTreeSet::from([iri("c")]),
                    level: Level::Top,
                },
                ClassDef {
                    iri: iri("c"),
                    parents: BTreeSet::from([iri("b")]),
                    level: Level::Top,
                },
            ],
            [],
            [Individual {
                iri: iri("i"),
                classes: BTreeSet::new(),
            }],
            [],
            [],
        );
        let findings = kb.check_consistency();
        assert_eq!(findings.len(), 3, "{findings:?}");
        assert!(findings.contains(&Finding::Cycle(BTreeSet::from([iri("b"), iri("c")]))));
        assert!(findings.contains(&Finding::IndividualWithoutClasses(iri("i"))));
    }

    #[test]
    fn literal_parsing() {
        assert_eq!(
            Literal::parse("12.50", LiteralType::Decimal),
            Ok(Literal::Decimal("12.50".into()))
        );
        assert!(Literal::parse("1e3", LiteralType::Decimal).is_err());
        assert!(Literal::parse("yes", LiteralType::Boolean).is_err());
        assert!(Literal::parse("05/03/2024", LiteralType::Date).is_err());
    }
}
