//! Turns clinician-administered diagnostic interview transcripts into
//! structured per-variable assessments.
//!
//! The pipeline has five stages, each in its own module:
//!
//! 1. [`align`] merges a speaker-diarized ASR transcript with a more accurate
//!    verbatim transcript and scores transcripts with WER / TDER.
//! 2. [`segment`] locates interview sections and question-level sessions
//!    using embedding and Levenshtein similarity ([`textsim`]).
//! 3. [`prompt`] and [`llm`] render variable-typed instructions and parse
//!    the structured answers returned by a chat-completion provider.
//! 4. [`assess`] drives prediction for every variable of an interview,
//!    including the Notes slot pipeline and rule-derived variables.
//! 5. [`metrics`] scores predictions against gold assessments.
//!
//! [`synthgen`] builds synthetic interviews with planted ground truth, used by
//! the test suites and the bundled demo corpus.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise; see [`par`].

pub mod align;
pub mod assess;
pub mod corpus;
pub mod error;
pub mod llm;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod prompt;
pub mod schema;
pub mod segment;
pub mod synthgen;
pub mod textsim;

mod http;
mod retry;

pub use error::{Error, ProviderError, Result};
pub use retry::{Fault, RetryPolicy};
