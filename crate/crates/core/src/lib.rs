//! Retrieval-augmented commentary generation for laboratory experiment videos.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`domain`] holds the step-level data model and the tagged commentary codec.
//! * [`knowledge_index`] builds and queries the flat cosine passage index.
//! * [`sequence_builder`] turns annotated steps into control-token training sequences.
//! * [`inference_engine`] drives a generator through the staged retrieval protocol.
//! * [`safety_preference`] builds preference pairs from sampled candidates.
//! * [`evaluation`] scores predictions against references.
//! * [`curation`] converts ASR transcripts into validated dataset records.
//!
//! Judges, generators, embedders and external scorers are traits; the crate ships
//! deterministic mocks and JSON-over-HTTP clients for each of them.

pub mod curation;
pub mod domain;
pub mod embed;
pub mod error;
pub mod evaluation;
pub mod inference_engine;
pub mod io;
pub mod judge;
pub mod knowledge_index;
pub mod remote;
pub mod safety_preference;
pub mod sequence_builder;
pub mod text;

pub use error::ErrorCategory;
