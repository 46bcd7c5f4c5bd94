//! Turning documents into serialized fill-in-the-blank examples.
//!
//! A blank of 1..=64 words is cut from each document under a placement
//! policy, the target length is discretized to the nearest bucket in
//! {1, 2, 4, 8, 16, 32, 64}, and the example is rendered as
//!
//! ```text
//! fill: <left context> _<bucket>_ <right context> Goal: <goal words>
//! ```
//!
//! with the right context and the goal clause optional. [`parse`] is the
//! exact inverse of [`serialize_input`] on well-formed inputs.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::rng::{derive_rng, SeededRng};

/// The allowed target-length buckets.
pub const BUCKETS: [u32; 7] = [1, 2, 4, 8, 16, 32, 64];

/// Hard cap on blank length in words.
pub const MAX_BLANK_WORDS: usize = 64;

#[derive(Debug, Error)]
pub enum BlankingError {
    #[error("length must be >= 1, got {0}")]
    InvalidLength(usize),
    #[error("{0} is not a valid length bucket")]
    InvalidBucket(u32),
    #[error("document {id:?} too short to blank ({words} words)")]
    DocumentTooShort { id: String, words: usize },
    #[error("invalid mixture config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("inconsistent example record {id:?}: {reason}")]
    Record { id: String, reason: String },
}

/// Discretized target length: one of {1, 2, 4, 8, 16, 32, 64}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LengthBucket(u32);

impl LengthBucket {
    pub fn new(value: u32) -> Result<Self, BlankingError> {
        if BUCKETS.contains(&value) {
            Ok(Self(value))
        } else {
            Err(BlankingError::InvalidBucket(value))
        }
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for LengthBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Map a word count to the closest bucket; ties break toward the smaller
/// bucket.
pub fn bucketize(n: usize) -> Result<LengthBucket, BlankingError> {
    if n == 0 {
        return Err(BlankingError::InvalidLength(n));
    }
    let mut best = BUCKETS[0];
    let mut best_distance = u64::MAX;
    for &bucket in &BUCKETS {
        let distance = (n as i64 - bucket as i64).unsigned_abs();
        if distance < best_distance {
            best = bucket;
            best_distance = distance;
        }
    }
    Ok(LengthBucket(best))
}

/// Where the blank goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Uniform random location and length.
    Random,
    /// At the end of the document (no right context).
    End,
    /// The middle sentence: index `floor(S / 2)` of `S` sentences.
    MiddleSentence,
    /// The last sentence.
    EndSentence,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Placement::Random => "random",
            Placement::End => "end",
            Placement::MiddleSentence => "middle_sentence",
            Placement::EndSentence => "end_sentence",
        };
        f.write_str(name)
    }
}

impl FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Placement::Random),
            "end" => Ok(Placement::End),
            "middle_sentence" | "middle-sentence" => Ok(Placement::MiddleSentence),
            "end_sentence" | "end-sentence" => Ok(Placement::EndSentence),
            other => Err(format!("unknown placement {other:?}")),
        }
    }
}

/// A selected blank within a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlankSpec {
    pub start: usize,
    pub length: usize,
    pub placement: Placement,
    /// True when a sentence blank exceeded [`MAX_BLANK_WORDS`] and was
    /// clamped to the sentence prefix.
    pub clamped: bool,
}

/// Choose a blank under the given placement policy.
///
/// Random and End draw a length uniformly from `[1, min(64, words - 1)]`, so
/// at least one context word always remains; a random blank that lands flush
/// at the end is labeled `End`. Sentence placements blank the whole chosen
/// sentence, clamped to its first 64 words when longer.
pub fn place_blank(
    doc: &Document,
    placement: Placement,
    rng: &mut SeededRng,
) -> Result<BlankSpec, BlankingError> {
    let n = doc.word_count();
    if n < 2 {
        return Err(BlankingError::DocumentTooShort {
            id: doc.id.clone(),
            words: n,
        });
    }
    match placement {
        Placement::Random | Placement::End => {
            let max_len = MAX_BLANK_WORDS.min(n - 1);
            let length = rng.gen_range(1..=max_len);
            let start = match placement {
                Placement::Random => rng.gen_range(0..=n - length),
                _ => n - length,
            };
            let placement = if start + length == n {
                Placement::End
            } else {
                Placement::Random
            };
            Ok(BlankSpec {
                start,
                length,
                placement,
                clamped: false,
            })
        }
        Placement::MiddleSentence | Placement::EndSentence => {
            let sentences = doc.sentence_bounds.len();
            if sentences == 0 {
                return Err(BlankingError::DocumentTooShort {
                    id: doc.id.clone(),
                    words: n,
                });
            }
            let index = match placement {
                Placement::MiddleSentence => sentences / 2,
                _ => sentences - 1,
            };
            let (start, end) = doc.sentence_bounds[index];
            let full = end - start;
            let length = full.min(MAX_BLANK_WORDS);
            Ok(BlankSpec {
                start,
                length,
                placement,
                clamped: full > MAX_BLANK_WORDS,
            })
        }
    }
}

/// Draw a goal: a contiguous substring of the target of up to half its
/// words. Targets shorter than two words yield no goal.
pub fn extract_goal(target: &[String], rng: &mut SeededRng) -> Option<Vec<String>> {
    let n = target.len();
    if n < 2 {
        return None;
    }
    let g = rng.gen_range(1..=n / 2);
    let start = rng.gen_range(0..=n - g);
    Some(target[start..start + g].to_vec())
}

/// One serialized (input, target) pair with its conditioning metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FitBExample {
    pub id: String,
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub target: Vec<String>,
    pub bucket: LengthBucket,
    pub goal: Option<Vec<String>>,
    pub placement: Placement,
    pub clamped: bool,
}

impl FitBExample {
    /// Render the `(input, target)` string pair.
    pub fn serialized(&self) -> (String, String) {
        let input = serialize_input(&self.left, self.bucket, &self.right, self.goal.as_deref());
        (input, self.target.join(" "))
    }

    /// The source window text: left, target, and right re-joined.
    pub fn window_text(&self) -> String {
        join_segments(&[
            &self.left.join(" "),
            &self.target.join(" "),
            &self.right.join(" "),
        ])
    }
}

/// Join non-empty segments with single spaces.
pub(crate) fn join_segments(segments: &[&str]) -> String {
    let mut out = String::new();
    for segment in segments {
        if segment.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(segment);
    }
    out
}

/// Serialize example fields into the model input string.
///
/// Grammar: `fill:` SP \[LEFT SP\] `_` DIGITS `_` \[SP RIGHT\] \[SP `Goal:`
/// SP GOAL\]. Single spaces throughout; empty left/right emit nothing.
pub fn serialize_input(
    left: &[String],
    bucket: LengthBucket,
    right: &[String],
    goal: Option<&[String]>,
) -> String {
    let mut out = String::from("fill: ");
    if !left.is_empty() {
        out.push_str(&left.join(" "));
        out.push(' ');
    }
    out.push('_');
    out.push_str(&bucket.to_string());
    out.push('_');
    if !right.is_empty() {
        out.push(' ');
        out.push_str(&right.join(" "));
    }
    if let Some(goal) = goal {
        out.push_str(" Goal: ");
        out.push_str(&goal.join(" "));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    MissingPrefix,
    NoBlankMarker,
    MultipleBlanks,
    InvalidBucket,
    EmptyGoal,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            ParseErrorKind::MissingPrefix => "input does not start with \"fill:\"",
            ParseErrorKind::NoBlankMarker => "no _N_ blank marker",
            ParseErrorKind::MultipleBlanks => "more than one _N_ blank marker",
            ParseErrorKind::InvalidBucket => "marker value is not a valid bucket",
            ParseErrorKind::EmptyGoal => "Goal: clause has no words",
        };
        f.write_str(msg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

/// Fields recovered from a serialized input string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed {
    pub left: Vec<String>,
    pub bucket: LengthBucket,
    pub right: Vec<String>,
    pub goal: Option<Vec<String>>,
}

fn marker_value(token: &str) -> Option<&str> {
    let inner = token.strip_prefix('_')?.strip_suffix('_')?;
    (!inner.is_empty() && inner.bytes().all(|b| b.is_ascii_digit())).then_some(inner)
}

/// Parse a serialized input string back into its fields.
///
/// Exactly one `_N_` marker is accepted, and `N` must be a valid bucket.
/// The first `Goal:` token after the marker starts the goal clause.
pub fn parse(input: &str) -> Result<Parsed, ParseError> {
    const PREFIX: &str = "fill:";
    if !input.starts_with(PREFIX) {
        return Err(ParseError {
            kind: ParseErrorKind::MissingPrefix,
            offset: 0,
        });
    }
    // Tokens with byte offsets, scanned from after the prefix.
    let mut tokens: Vec<(usize, &str)> = Vec::new();
    let body = &input[PREFIX.len()..];
    let mut token_start = None;
    for (i, b) in body.bytes().enumerate() {
        if b.is_ascii_whitespace() {
            if let Some(s) = token_start.take() {
                tokens.push((PREFIX.len() + s, &body[s..i]));
            }
        } else if token_start.is_none() {
            token_start = Some(i);
        }
    }
    if let Some(s) = token_start {
        tokens.push((PREFIX.len() + s, &body[s..]));
    }

    let markers: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, (_, t))| marker_value(t).is_some())
        .map(|(i, _)| i)
        .collect();
    let marker_index = match markers.as_slice() {
        [] => {
            return Err(ParseError {
                kind: ParseErrorKind::NoBlankMarker,
                offset: input.len(),
            })
        }
        [single] => *single,
        [_, second, ..] => {
            return Err(ParseError {
                kind: ParseErrorKind::MultipleBlanks,
                offset: tokens[*second].0,
            })
        }
    };
    let (marker_offset, marker_token) = tokens[marker_index];
    let bucket = marker_value(marker_token)
        .unwrap()
        .parse::<u32>()
        .ok()
        .and_then(|v| LengthBucket::new(v).ok())
        .ok_or(ParseError {
            kind: ParseErrorKind::InvalidBucket,
            offset: marker_offset,
        })?;

    let left: Vec<String> = tokens[..marker_index]
        .iter()
        .map(|(_, t)| (*t).to_owned())
        .collect();
    let after = &tokens[marker_index + 1..];
    let goal_split = after.iter().position(|(_, t)| *t == "Goal:");
    let (right_tokens, goal) = match goal_split {
        Some(g) => {
            let goal_words: Vec<String> = after[g + 1..]
                .iter()
                .map(|(_, t)| (*t).to_owned())
                .collect();
            if goal_words.is_empty() {
                return Err(ParseError {
                    kind: ParseErrorKind::EmptyGoal,
                    offset: after[g].0,
                });
            }
            (&after[..g], Some(goal_words))
        }
        None => (after, None),
    };
    let right: Vec<String> = right_tokens.iter().map(|(_, t)| (*t).to_owned()).collect();
    Ok(Parsed {
        left,
        bucket,
        right,
        goal,
    })
}

/// Training-data mixture settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureSetting {
    /// Blank location sampled uniformly at random.
    FillBlank,
    /// Half random, half at the end.
    FillBlankCont,
    /// Always at the end (continuation only).
    Cont,
}

impl fmt::Display for MixtureSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MixtureSetting::FillBlank => "fillblank",
            MixtureSetting::FillBlankCont => "fillblankcont",
            MixtureSetting::Cont => "cont",
        };
        f.write_str(name)
    }
}

impl FromStr for MixtureSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fillblank" => Ok(MixtureSetting::FillBlank),
            "fillblankcont" => Ok(MixtureSetting::FillBlankCont),
            "cont" => Ok(MixtureSetting::Cont),
            other => Err(format!("unknown mixture setting {other:?}")),
        }
    }
}

/// Configuration for [`build_dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureConfig {
    pub setting: MixtureSetting,
    /// Probability that a goal substring is attached to an example.
    pub goal_fraction: f64,
    pub seed: u64,
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<(), BlankingError> {
        if !(0.0..=1.0).contains(&self.goal_fraction) {
            return Err(BlankingError::InvalidConfig(format!(
                "goal_fraction must be in [0, 1], got {}",
                self.goal_fraction
            )));
        }
        Ok(())
    }
}

/// Counters from a dataset build.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct BuildStats {
    pub examples: u64,
    /// Documents too short to blank, skipped.
    pub skipped_short: u64,
    /// Examples whose sentence blank was clamped to 64 words.
    pub clamped: u64,
}

fn build_example(
    doc: &Document,
    placement: Placement,
    attach_goal: bool,
    seed: u64,
) -> Option<FitBExample> {
    let mut blank_rng = derive_rng(seed, &[&doc.id, "blank"]);
    let spec = place_blank(doc, placement, &mut blank_rng).ok()?;
    let left = doc.words[..spec.start].to_vec();
    let target = doc.words[spec.start..spec.start + spec.length].to_vec();
    let right = doc.words[spec.start + spec.length..].to_vec();
    let bucket = bucketize(target.len()).expect("blank length is >= 1");
    let goal = if attach_goal {
        let mut goal_rng = derive_rng(seed, &[&doc.id, "goal-span"]);
        extract_goal(&target, &mut goal_rng)
    } else {
        None
    };
    Some(FitBExample {
        id: doc.id.clone(),
        left,
        right,
        target,
        bucket,
        goal,
        placement: spec.placement,
        clamped: spec.clamped,
    })
}

/// Build one training example per document under the mixture setting.
///
/// `FillBlankCont` flips a fair coin per document between random and end
/// placement; goals are attached with probability `goal_fraction`. Documents
/// too short to blank are skipped and counted.
pub fn build_dataset(
    docs: &[Document],
    cfg: &MixtureConfig,
) -> Result<(Vec<FitBExample>, BuildStats), BlankingError> {
    cfg.validate()?;
    let mut examples = Vec::with_capacity(docs.len());
    let mut stats = BuildStats::default();
    for doc in docs {
        let placement = match cfg.setting {
            MixtureSetting::FillBlank => Placement::Random,
            MixtureSetting::Cont => Placement::End,
            MixtureSetting::FillBlankCont => {
                let mut coin = derive_rng(cfg.seed, &[&doc.id, "placement"]);
                if coin.gen_bool(0.5) {
                    Placement::End
                } else {
                    Placement::Random
                }
            }
        };
        let attach_goal = {
            let mut coin = derive_rng(cfg.seed, &[&doc.id, "goal-coin"]);
            coin.gen_bool(cfg.goal_fraction)
        };
        match build_example(doc, placement, attach_goal, cfg.seed) {
            Some(example) => {
                stats.examples += 1;
                stats.clamped += example.clamped as u64;
                examples.push(example);
            }
            None => stats.skipped_short += 1,
        }
    }
    Ok((examples, stats))
}

/// Build an evaluation set: fixed placement, no goal conditioning, at most
/// `cap` examples selected in id order.
pub fn build_evalset(
    docs: &[Document],
    placement: Placement,
    cap: usize,
    seed: u64,
) -> (Vec<FitBExample>, BuildStats) {
    let mut order: Vec<&Document> = docs.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut examples = Vec::new();
    let mut stats = BuildStats::default();
    for doc in order {
        if examples.len() >= cap {
            break;
        }
        match build_example(doc, placement, false, seed) {
            Some(example) => {
                stats.examples += 1;
                stats.clamped += example.clamped as u64;
                examples.push(example);
            }
            None => stats.skipped_short += 1,
        }
    }
    (examples, stats)
}

/// JSONL row for a built example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub input: String,
    pub target: String,
    pub bucket: u32,
    pub placement: Placement,
    pub goal: Option<String>,
    pub left_len: usize,
    pub right_len: usize,
    pub target_len: usize,
    #[serde(default)]
    pub clamped: bool,
}

impl From<&FitBExample> for ExampleRecord {
    fn from(example: &FitBExample) -> Self {
        let (input, target) = example.serialized();
        ExampleRecord {
            id: example.id.clone(),
            input,
            target,
            bucket: example.bucket.value(),
            placement: example.placement,
            goal: example.goal.as_ref().map(|g| g.join(" ")),
            left_len: example.left.len(),
            right_len: example.right.len(),
            target_len: example.target.len(),
            clamped: example.clamped,
        }
    }
}

impl TryFrom<ExampleRecord> for FitBExample {
    type Error = BlankingError;

    /// Rebuild the example by re-parsing its input string, cross-checking
    /// the redundant fields.
    fn try_from(record: ExampleRecord) -> Result<Self, Self::Error> {
        let parsed = parse(&record.input)?;
        let target: Vec<String> = record
            .target
            .split_whitespace()
            .map(str::to_owned)
            .collect();
        let mismatch = |reason: &str| BlankingError::Record {
            id: record.id.clone(),
            reason: reason.to_owned(),
        };
        if parsed.bucket.value() != record.bucket {
            return Err(mismatch("bucket field disagrees with input marker"));
        }
        if parsed.left.len() != record.left_len || parsed.right.len() != record.right_len {
            return Err(mismatch("context lengths disagree with input"));
        }
        if target.len() != record.target_len {
            return Err(mismatch("target_len disagrees with target"));
        }
        if parsed.goal.as_ref().map(|g| g.join(" ")) != record.goal {
            return Err(mismatch("goal field disagrees with input"));
        }
        Ok(FitBExample {
            id: record.id,
            left: parsed.left,
            right: parsed.right,
            target,
            bucket: parsed.bucket,
            goal: parsed.goal,
            placement: record.placement,
            clamped: record.clamped,
        })
    }
}
