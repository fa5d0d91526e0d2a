use super::{extend_kb, Iri, KnowledgeBase, Level, Literal, OntologyError, Term};
use crate::domain::Registry;

/// Namespace applied to unprefixed names in queries and registry facts.
pub const APP_PREFIX: &str = "app:";

const APPLICATION_ONTOLOGY: &str = include_str!("../../assets/sampling.kb");

// (class, parent) pairs in parent-first order.
const BFO_CLASSES: &[(&str, Option<&str>)] = &[
    ("bfo:entity", None),
    ("bfo:continuant", Some("bfo:entity")),
    ("bfo:occurrent", Some("bfo:entity")),
    ("bfo:independent_continuant", Some("bfo:continuant")),
    ("bfo:specifically_dependent_continuant", Some("bfo:continuant")),
    ("bfo:generically_dependent_continuant", Some("bfo:continuant")),
    ("bfo:material_entity", Some("bfo:independent_continuant")),
    ("bfo:immaterial_entity", Some("bfo:independent_continuant")),
    ("bfo:object", Some("bfo:material_entity")),
    ("bfo:site", Some("bfo:immaterial_entity")),
    ("bfo:quality", Some("bfo:specifically_dependent_continuant")),
    ("bfo:realizable_entity", Some("bfo:specifically_dependent_continuant")),
    ("bfo:role", Some("bfo:realizable_entity")),
    ("bfo:disposition", Some("bfo:realizable_entity")),
    ("bfo:process", Some("bfo:occurrent")),
    ("bfo:process_boundary", Some("bfo:occurrent")),
    ("bfo:temporal_region", Some("bfo:occurrent")),
    ("bfo:spatiotemporal_region", Some("bfo:occurrent")),
];

/// Top-level BFO classes: `entity` splits into `continuant` and `occurrent`,
/// with the usual dependent/independent and process/region refinements.
pub fn load_bfo_skeleton() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    for &(class, parent) in BFO_CLASSES {
        kb.add_class(class, parent.map(Iri::from), Level::Top)
            .expect("static skeleton is well-formed");
    }
    kb
}

/// BFO skeleton plus the bundled sampling ontology: zones, points, methods,
/// roles, action types, RACI fixture assignments and terminology.
pub fn application_ontology() -> KnowledgeBase {
    let mut kb = load_bfo_skeleton();
    extend_kb(&mut kb, APPLICATION_ONTOLOGY).expect("bundled ontology is well-formed");
    kb
}

pub fn app_iri(name: &str) -> Iri {
    Iri::new(format!("{APP_PREFIX}{name}"))
}

/// Registers the registry's zones, points and methods as individuals with
/// their basic facts. Entries already present are left alone.
pub fn populate_from_registry(kb: &mut KnowledgeBase, registry: &Registry) -> Result<(), OntologyError> {
    let mut staged = kb.clone();
    let string = |s: &str| Term::Literal(Literal::String(s.to_owned()));
    for zone in registry.zones() {
        let iri = app_iri(zone.zone_id.as_str());
        if staged.individual(iri.as_str()).is_some() {
            continue;
        }
        staged.assert_individual(iri.clone(), [Iri::from("app:SamplingZone")])?;
        staged.assert_relation(iri, "app:zoneName", string(&zone.name))?;
    }
    for point in registry.points() {
        let iri = app_iri(point.point_id.as_str());
        if staged.individual(iri.as_str()).is_some() {
            continue;
        }
        staged.assert_individual(iri.clone(), [Iri::from("app:SamplingPoint")])?;
        staged.assert_relation(
            iri.clone(),
            "app:locatedInZone",
            Term::Iri(app_iri(point.zone_id.as_str())),
        )?;
        staged.assert_relation(iri.clone(), "app:waterType", string(point.water_type.as_str()))?;
        if !point.mechanical_notes.is_empty() {
            staged.assert_relation(iri, "app:mechanicalNotes", string(&point.mechanical_notes))?;
        }
    }
    for method in registry.methods() {
        let iri = app_iri(method.method_id.as_str());
        if staged.individual(iri.as_str()).is_some() {
            continue;
        }
        staged.assert_individual(iri.clone(), [Iri::from("app:SamplingMethod")])?;
        staged.assert_relation(
            iri,
            "app:keyStepCount",
            Term::Literal(Literal::Integer(method.key_steps.len() as i64)),
        )?;
    }
    *kb = staged;
    Ok(())
}
