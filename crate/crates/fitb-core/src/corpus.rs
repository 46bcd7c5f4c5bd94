//! Corpus ingestion: tokenization, sentence segmentation, and random
//! truncation of documents into bounded word windows.
//!
//! A word is a whitespace-separated token. Sentence bounds are computed with a
//! terminal-punctuation rule (a token ending in `.`, `!` or `?` closes a
//! sentence; trailing tokens form a final sentence), or taken verbatim from
//! pre-segmented input.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::thread;

use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::rng::{derive_rng, SeededRng};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document {0:?} has no word tokens")]
    EmptyDocument(String),
    #[error("invalid truncation config: {0}")]
    InvalidConfig(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// A tokenized source text with sentence boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    /// Stable unique identifier.
    pub id: String,
    /// Word tokens: non-empty strings with no internal whitespace.
    pub words: Vec<String>,
    /// `(start, end)` pairs partitioning `0..words.len()` in order.
    pub sentence_bounds: Vec<(usize, usize)>,
}

impl Document {
    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// Word slice of the sentence at `index`.
    pub fn sentence(&self, index: usize) -> &[String] {
        let (a, b) = self.sentence_bounds[index];
        &self.words[a..b]
    }

    /// The document text re-joined with single spaces.
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

/// Bounds for the random truncation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationConfig {
    /// Minimum window length when a document is truncated.
    pub min_words: usize,
    /// Maximum length of any emitted document.
    pub max_words: usize,
    /// Documents shorter than this are skipped entirely.
    pub min_keep: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            min_words: 256,
            max_words: 512,
            min_keep: 64,
        }
    }
}

impl TruncationConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(1 <= self.min_keep
            && self.min_keep <= self.min_words
            && self.min_words <= self.max_words)
        {
            return Err(CorpusError::InvalidConfig(format!(
                "need 1 <= min_keep ({}) <= min_words ({}) <= max_words ({})",
                self.min_keep, self.min_words, self.max_words
            )));
        }
        Ok(())
    }
}

fn ends_sentence(token: &str) -> bool {
    matches!(token.chars().last(), Some('.') | Some('!') | Some('?'))
}

/// Split raw text into a document of whitespace word tokens with
/// rule-based sentence bounds.
pub fn tokenize(id: &str, raw_text: &str) -> Result<Document, CorpusError> {
    let words: Vec<String> = raw_text.split_whitespace().map(str::to_owned).collect();
    if words.is_empty() {
        return Err(CorpusError::EmptyDocument(id.to_owned()));
    }
    let mut sentence_bounds = Vec::new();
    let mut start = 0;
    for (i, w) in words.iter().enumerate() {
        if ends_sentence(w) {
            sentence_bounds.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < words.len() {
        sentence_bounds.push((start, words.len()));
    }
    Ok(Document {
        id: id.to_owned(),
        words,
        sentence_bounds,
    })
}

/// Build a document from pre-segmented sentences, bypassing the splitter.
/// Sentences with no tokens are dropped.
pub fn from_sentences(id: &str, sentences: &[String]) -> Result<Document, CorpusError> {
    let mut words = Vec::new();
    let mut sentence_bounds = Vec::new();
    for sentence in sentences {
        let start = words.len();
        words.extend(sentence.split_whitespace().map(str::to_owned));
        if words.len() > start {
            sentence_bounds.push((start, words.len()));
        }
    }
    if words.is_empty() {
        return Err(CorpusError::EmptyDocument(id.to_owned()));
    }
    Ok(Document {
        id: id.to_owned(),
        words,
        sentence_bounds,
    })
}

/// Randomly truncate a document to a window of `min_words..=max_words` words.
///
/// Documents shorter than `min_keep` are skipped (`None`); documents already
/// within `max_words` pass through unchanged. Otherwise the window length is
/// drawn uniformly from `[min_words, max_words]` and the start offset
/// uniformly from the legal range. Sentences cut by the window edge become
/// whole sentences of the clipped span.
pub fn truncate(doc: Document, cfg: &TruncationConfig, rng: &mut SeededRng) -> Option<Document> {
    let n = doc.word_count();
    if n < cfg.min_keep {
        return None;
    }
    if n <= cfg.max_words {
        return Some(doc);
    }
    let length = rng.gen_range(cfg.min_words..=cfg.max_words);
    let start = rng.gen_range(0..=n - length);
    let end = start + length;
    let words = doc.words[start..end].to_vec();
    let sentence_bounds = doc
        .sentence_bounds
        .iter()
        .filter_map(|&(a, b)| {
            let lo = a.max(start);
            let hi = b.min(end);
            (lo < hi).then(|| (lo - start, hi - start))
        })
        .collect();
    Some(Document {
        id: doc.id,
        words,
        sentence_bounds,
    })
}

/// One line of input JSONL: either raw text or pre-segmented sentences.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawRecord {
    Sentences { id: String, sentences: Vec<String> },
    Text { id: String, text: String },
}

impl RawRecord {
    fn into_document(self) -> Result<Document, CorpusError> {
        match self {
            RawRecord::Text { id, text } => tokenize(&id, &text),
            RawRecord::Sentences { id, sentences } => from_sentences(&id, &sentences),
        }
    }
}

/// Counters accumulated during ingestion.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct IngestStats {
    pub documents: u64,
    pub words: u64,
    pub sentences: u64,
    /// Lines that failed to parse or contained no tokens; skipped.
    pub malformed: u64,
    /// Documents below `min_keep`, skipped by truncation.
    pub skipped_short: u64,
}

fn process_lines(
    lines: &[String],
    cfg: &TruncationConfig,
    seed: u64,
) -> (Vec<Document>, IngestStats) {
    let mut docs = Vec::new();
    let mut stats = IngestStats::default();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let doc = match serde_json::from_str::<RawRecord>(line) {
            Ok(record) => match record.into_document() {
                Ok(doc) => doc,
                Err(_) => {
                    stats.malformed += 1;
                    continue;
                }
            },
            Err(_) => {
                stats.malformed += 1;
                continue;
            }
        };
        let mut rng = derive_rng(seed, &[&doc.id, "truncate"]);
        match truncate(doc, cfg, &mut rng) {
            Some(doc) => {
                stats.documents += 1;
                stats.words += doc.word_count() as u64;
                stats.sentences += doc.sentence_bounds.len() as u64;
                docs.push(doc);
            }
            None => stats.skipped_short += 1,
        }
    }
    (docs, stats)
}

fn merge_stats(a: IngestStats, b: IngestStats) -> IngestStats {
    IngestStats {
        documents: a.documents + b.documents,
        words: a.words + b.words,
        sentences: a.sentences + b.sentences,
        malformed: a.malformed + b.malformed,
        skipped_short: a.skipped_short + b.skipped_short,
    }
}

/// Ingest JSONL files into truncated documents, sorted by id.
///
/// Each line holds `{"id", "text"}` or `{"id", "sentences": [...]}`. The
/// per-document RNG is keyed by `(seed, id)`, so the result is identical for
/// any `workers` count; lines are only sharded for throughput.
pub fn ingest_paths(
    paths: &[PathBuf],
    cfg: &TruncationConfig,
    seed: u64,
    workers: usize,
) -> Result<(Vec<Document>, IngestStats), CorpusError> {
    cfg.validate()?;
    let mut lines = Vec::new();
    for path in paths {
        read_lines(path, &mut lines)?;
    }
    Ok(ingest_lines(&lines, cfg, seed, workers))
}

/// Same as [`ingest_paths`], over in-memory JSONL lines.
pub fn ingest_lines(
    lines: &[String],
    cfg: &TruncationConfig,
    seed: u64,
    workers: usize,
) -> (Vec<Document>, IngestStats) {
    let workers = workers.max(1);
    let chunk = lines.len().div_ceil(workers).max(1);
    let (mut docs, stats) = thread::scope(|scope| {
        let handles: Vec<_> = lines
            .chunks(chunk)
            .map(|shard| scope.spawn(move || process_lines(shard, cfg, seed)))
            .collect();
        let mut docs = Vec::new();
        let mut stats = IngestStats::default();
        for handle in handles {
            let (shard_docs, shard_stats) = handle.join().expect("ingest worker panicked");
            docs.extend(shard_docs);
            stats = merge_stats(stats, shard_stats);
        }
        (docs, stats)
    });
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    (docs, stats)
}

fn read_lines(path: &Path, out: &mut Vec<String>) -> Result<(), CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
        out.push(line);
    }
    Ok(())
}
