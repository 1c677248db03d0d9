//! Span labeling with generative language models.
//!
//! The crate covers the whole pipeline around asking a decoder-only model to
//! label spans of an input text:
//!
//! - [`span`]: the shared data model (character-indexed spans, examples,
//!   parse results).
//! - [`strategies`]: prompt rendering and output parsing for tagging,
//!   indexing and matching strategies.
//! - [`spanmatch`]: locating generated span text inside the input.
//! - [`tokenmodel`]: byte-level vocabularies, prefix lookup over the input and
//!   a small deterministic BPE tokenizer used for testing.
//! - [`logitmatch`]: the LogitMatch constrained decoder, which masks the
//!   vocabulary so that every decoded `"text"` value is a verbatim span of the
//!   input.
//! - [`eval`]: overlap-adjusted hard/soft precision, recall and F1 plus the
//!   parsing / span content / category error rates.
//! - [`cpl`]: the synthetic conditional pattern lookup task with an exact
//!   gold oracle.
//! - [`backend`]: generation backends (scripted mock, OpenAI-compatible HTTP).
//! - [`dataset`]: JSON-lines dataset and prediction records.

pub mod backend;
pub mod cpl;
pub mod dataset;
pub mod eval;
pub mod logitmatch;
pub mod span;
pub mod spanmatch;
pub mod strategies;
pub mod tokenmodel;

pub use span::{LabeledExample, ParseError, ParseResult, RawPrediction, Span, Task};
