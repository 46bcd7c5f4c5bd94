//! Baseline infill generators.
//!
//! Non-neural reference points for the evaluation loop: the oracle returns
//! the groundtruth target, the random generator fills the bucket with
//! uniform vocabulary words, retrieval copies the best-overlapping span
//! from a reference corpus, goal-echo emits the goal words padded with
//! filler, and null emits nothing.
//!
//! Only the oracle may see the target: all other generators take a
//! [`RedactedExample`], which carries no target field, so the harness
//! cannot leak groundtruth into a baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blanking::{FitBExample, LengthBucket, Placement};
use crate::corpus::Document;
use crate::rng::SeededRng;
use crate::text::contains_goal_words;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("example {0:?} carries no target")]
    MissingTarget(String),
    #[error("generator vocabulary is empty")]
    EmptyVocab,
    #[error("reference corpus has no span of {0} words")]
    NoCandidates(usize),
}

/// An example as non-oracle generators see it: no target.
#[derive(Debug, Clone, Copy)]
pub struct RedactedExample<'a> {
    pub id: &'a str,
    pub left: &'a [String],
    pub right: &'a [String],
    pub bucket: LengthBucket,
    pub goal: Option<&'a [String]>,
    pub placement: Placement,
}

impl<'a> From<&'a FitBExample> for RedactedExample<'a> {
    fn from(example: &'a FitBExample) -> Self {
        RedactedExample {
            id: &example.id,
            left: &example.left,
            right: &example.right,
            bucket: example.bucket,
            goal: example.goal.as_deref(),
            placement: example.placement,
        }
    }
}

/// One generated infill, keyed to its example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub example_id: String,
    pub generation: Vec<String>,
    pub generator_name: String,
    /// Decoding metadata recorded for externally produced generations,
    /// e.g. `{"strategy": "top-k", "k": 50}`. Null for the baselines here.
    #[serde(default)]
    pub decode_config: serde_json::Value,
}

impl GenerationRecord {
    fn new(example_id: &str, generation: Vec<String>, generator_name: &str) -> Self {
        GenerationRecord {
            example_id: example_id.to_owned(),
            generation,
            generator_name: generator_name.to_owned(),
            decode_config: serde_json::Value::Null,
        }
    }
}

/// Return the groundtruth target. The ideal reference point: length and
/// goal accuracy are 1.0 and fluency matches the groundtruth by
/// construction.
pub fn oracle_generate(example: &FitBExample) -> Result<GenerationRecord, GeneratorError> {
    if example.target.is_empty() {
        return Err(GeneratorError::MissingTarget(example.id.clone()));
    }
    Ok(GenerationRecord::new(
        &example.id,
        example.target.clone(),
        "oracle",
    ))
}

/// Exactly bucket-many words sampled uniformly from the vocabulary.
pub fn random_generate(
    example: &RedactedExample,
    vocab: &[String],
    rng: &mut SeededRng,
) -> Result<GenerationRecord, GeneratorError> {
    if vocab.is_empty() {
        return Err(GeneratorError::EmptyVocab);
    }
    let generation = (0..example.bucket.value())
        .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
        .collect();
    Ok(GenerationRecord::new(example.id, generation, "random"))
}

/// How many candidate spans [`retrieval_generate`] samples.
pub const DEFAULT_RETRIEVAL_CANDIDATES: usize = 64;

/// Copy a span of exactly bucket-many words from the reference corpus.
///
/// Candidates are sampled uniformly over all legal (document, start)
/// positions; the winner is the candidate sharing the most tokens with the
/// example's context, and when a goal is present, candidates containing all
/// goal words are preferred. Ties keep the earliest sampled candidate.
pub fn retrieval_generate(
    example: &RedactedExample,
    reference: &[Document],
    candidates: usize,
    rng: &mut SeededRng,
) -> Result<GenerationRecord, GeneratorError> {
    let span_len = example.bucket.value() as usize;
    // cumulative legal start positions, over documents long enough to hold
    // a span; offsets are strictly increasing
    let mut cumulative: Vec<(u64, usize)> = Vec::with_capacity(reference.len());
    let mut total: u64 = 0;
    for (doc_index, doc) in reference.iter().enumerate() {
        let positions = doc.word_count().saturating_sub(span_len - 1) as u64;
        if positions > 0 {
            cumulative.push((total, doc_index));
            total += positions;
        }
    }
    if total == 0 {
        return Err(GeneratorError::NoCandidates(span_len));
    }
    let context: std::collections::HashSet<&str> = example
        .left
        .iter()
        .chain(example.right.iter())
        .map(String::as_str)
        .collect();
    let mut best: Option<(bool, usize, &[String])> = None;
    for _ in 0..candidates.max(1) {
        let draw = rng.gen_range(0..total);
        let slot = match cumulative.binary_search_by(|&(offset, _)| offset.cmp(&draw)) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let (offset, doc_index) = cumulative[slot];
        let start = (draw - offset) as usize;
        let span = &reference[doc_index].words[start..start + span_len];
        let overlap = span.iter().filter(|w| context.contains(w.as_str())).count();
        let goal_hit = example
            .goal
            .map(|goal| contains_goal_words(goal, span))
            .unwrap_or(false);
        let better = match &best {
            None => true,
            Some((best_goal, best_overlap, _)) => (goal_hit, overlap) > (*best_goal, *best_overlap),
        };
        if better {
            best = Some((goal_hit, overlap, span));
        }
    }
    let (_, _, span) = best.expect("at least one candidate sampled");
    Ok(GenerationRecord::new(
        example.id,
        span.to_vec(),
        "retrieval",
    ))
}

/// Emit the goal words (when present) padded with filler words to exactly
/// bucket-many words; a goal longer than the bucket is cut to its first
/// bucket-many words.
pub fn goal_echo_generate(
    example: &RedactedExample,
    filler_vocab: &[String],
    rng: &mut SeededRng,
) -> Result<GenerationRecord, GeneratorError> {
    if filler_vocab.is_empty() {
        return Err(GeneratorError::EmptyVocab);
    }
    let want = example.bucket.value() as usize;
    let mut generation: Vec<String> = example
        .goal
        .map(|goal| goal.iter().take(want).cloned().collect())
        .unwrap_or_default();
    while generation.len() < want {
        generation.push(filler_vocab[rng.gen_range(0..filler_vocab.len())].clone());
    }
    Ok(GenerationRecord::new(example.id, generation, "goal-echo"))
}

/// Emit nothing: the only generator allowed an empty generation. Filling
/// with it joins the left and right contexts directly.
pub fn null_generate(example: &RedactedExample) -> GenerationRecord {
    GenerationRecord::new(example.id, Vec::new(), "null")
}
