//! Association-chain evaluation harness.
//!
//! Turns a labeled image corpus into multi-step association tasks, runs them
//! against model backends (or serves them to human testers), and reports
//! chain-length and success-ratio metrics.

pub mod builder;
pub mod config;
pub mod corpus;
pub mod experiment;
pub mod fixtures;
pub mod memory;
pub mod metrics;
pub mod modelio;
pub mod prompt;
pub mod refine;
pub mod rng;
pub mod roundlog;
pub mod runner;
pub mod server;

pub use builder::{OptionSlot, RoundKind, RoundPlan, StepCandidates};
pub use corpus::{Concept, ConceptKind, ConceptVocabulary, Corpus, Sample, SampleId};
pub use memory::{MemoryBase, MemoryStrategy};
