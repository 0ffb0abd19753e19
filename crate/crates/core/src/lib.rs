//! Core library for inferring the entity types hidden under document
//! redactions, and for the character-evasion countermeasure that defeats
//! such inference.
//!
//! The pipeline: parse an annotated corpus ([`corpus`]), normalize and split
//! it into single-redaction sentences ([`preprocess`]), rebalance classes
//! ([`balance`]), turn sentences into vectors with an optionally fine-tuned
//! embedder ([`embed`]), train and evaluate classifiers ([`classify`] on top
//! of the [`nnet`] kernel), and measure the homoglyph countermeasure
//! ([`evade`]). [`synthetic`] generates a deterministic stand-in corpus and
//! [`pipeline`] drives the stages end to end.

pub mod balance;
mod binio;
pub mod classify;
pub mod corpus;
pub mod embed;
pub mod evade;
pub mod nnet;
pub mod pipeline;
pub mod preprocess;
pub mod synthetic;

pub use balance::Seed;
pub use corpus::{AnnotatedDocument, EntityLabel, RedactedSample};
pub use embed::{Embedding, Projection, EMBED_DIM};
