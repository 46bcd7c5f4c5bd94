//! Construction and evaluation of fill-in-the-blank (FitB) text datasets.
//!
//! The pipeline runs corpus ingestion through example construction to metric
//! reports:
//!
//! 1. [`corpus`] — tokenize raw documents into word sequences with sentence
//!    bounds and randomly truncate them to a target window.
//! 2. [`blanking`] — cut a blank out of each document, bucket the target
//!    length, optionally attach a goal substring, and serialize the example
//!    into the `fill: ... _N_ ... Goal: ...` text-to-text format.
//! 3. [`prompting`] — assemble few-shot prompts from built examples under
//!    per-shot and whole-prompt unit budgets.
//! 4. [`generators`] — non-neural baseline infill generators (oracle, random
//!    words, retrieval, goal echo) that drive the evaluation loop.
//! 5. [`ngram`] — an interpolated word n-gram language model used as the
//!    desk-scale fluency scorer.
//! 6. [`eval`] — length-bucket accuracy, goal-word accuracy, fluency
//!    perplexity of filled passages, and length histograms.
//!
//! Every random draw flows from a single seed through [`rng::derive_rng`],
//! keyed by document id and a purpose tag, so results are independent of
//! shard assignment and worker count.

pub mod blanking;
pub mod corpus;
pub mod eval;
pub mod generators;
pub mod io;
pub mod ngram;
pub mod prompting;
pub mod rng;
pub mod text;

pub use blanking::{FitBExample, LengthBucket, MixtureConfig, MixtureSetting, Placement};
pub use corpus::{Document, TruncationConfig};
pub use eval::{EvalReport, Scorer};
pub use generators::GenerationRecord;
pub use ngram::{NGramModel, ScoreResult};
