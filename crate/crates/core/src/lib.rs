//! Core of the sampling desk: the domain model plus the knowledge base,
//! worksheet ingestion, the check-in workflow engine, route sequencing and
//! progress analytics built on it.

pub mod analysis;
pub mod domain;
pub mod ingestion;
pub mod ontology;
pub mod sequencer;
pub mod store;
pub mod workflow;
