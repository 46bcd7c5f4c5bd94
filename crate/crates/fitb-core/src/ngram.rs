//! Word-level interpolated n-gram language model.
//!
//! The fluency scorer for evaluation at desk scale. Probabilities are
//! Jelinek-Mercer interpolated across orders: each order contributes its
//! weight times the maximum-likelihood conditional; an order whose context
//! was never observed passes its weight down to the next lower order, and
//! the unigram is floored with add-alpha smoothing over the vocabulary, so
//! every token has positive probability.
//!
//! Texts are scored as BOS-padded, EOS-terminated word sequences, with
//! out-of-vocabulary words mapped to `<unk>`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;

const MODEL_FORMAT: &str = "fitb-ngram";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NGramError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("no texts to score")]
    EmptyInput,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("bad model file: {0}")]
    BadModel(String),
}

/// Training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub order: usize,
    /// Add-alpha constant for the unigram floor.
    pub alpha: f64,
    /// Words seen fewer than this many times train as `<unk>`.
    pub min_count: u64,
    /// Interpolation weights, highest order first; `None` picks defaults.
    pub lambdas: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            order: 3,
            alpha: 0.1,
            min_count: 2,
            lambdas: None,
        }
    }
}

/// Default interpolation weights for an order, highest order first.
pub fn default_lambdas(order: usize) -> Vec<f64> {
    match order {
        1 => vec![1.0],
        2 => vec![0.7, 0.3],
        3 => vec![0.6, 0.3, 0.1],
        n => {
            let total = (1u64 << n) - 1;
            (0..n)
                .map(|i| (1u64 << (n - 1 - i)) as f64 / total as f64)
                .collect()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct CountTable {
    total: u64,
    next: HashMap<u32, u64>,
}

/// A trained interpolated n-gram model. Immutable once trained; safe to
/// share across concurrent scorers.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    min_count: u64,
    /// Highest order first, unigram last.
    lambdas: Vec<f64>,
    /// id -> word; ids 0..3 are BOS, EOS, UNK.
    words: Vec<String>,
    index: HashMap<String, u32>,
    /// `counts[k - 1]` maps contexts of `k - 1` word ids to next-word tables.
    counts: Vec<HashMap<Vec<u32>, CountTable>>,
}

/// Per-text scoring result in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub total_nll: f64,
    pub token_count: usize,
    pub per_token_nll: Vec<f64>,
}

impl ScoreResult {
    /// Build from an aggregate total, splitting the NLL evenly per token.
    /// Used for scorers that only report per-text totals.
    pub fn from_total(total_nll: f64, token_count: usize) -> Self {
        ScoreResult {
            total_nll,
            token_count,
            per_token_nll: vec![total_nll / token_count as f64; token_count],
        }
    }

    pub fn perplexity(&self) -> f64 {
        (self.total_nll / self.token_count as f64).exp()
    }
}

/// Corpus-level perplexity: `exp(sum of NLL / sum of token counts)`.
pub fn aggregate_perplexity(results: &[ScoreResult]) -> Option<f64> {
    let total: f64 = results.iter().map(|r| r.total_nll).sum();
    let tokens: usize = results.iter().map(|r| r.token_count).sum();
    (tokens > 0).then(|| (total / tokens as f64).exp())
}

/// Mean of per-example perplexities, the secondary aggregation.
pub fn mean_example_perplexity(results: &[ScoreResult]) -> Option<f64> {
    if results.is_empty() {
        return None;
    }
    let sum: f64 = results.iter().map(|r| r.perplexity()).sum();
    Some(sum / results.len() as f64)
}

fn validate_lambdas(order: usize, lambdas: &[f64]) -> Result<(), NGramError> {
    if lambdas.len() != order {
        return Err(NGramError::InvalidConfig(format!(
            "need {order} lambdas, got {}",
            lambdas.len()
        )));
    }
    if lambdas.iter().any(|&l| l < 0.0) {
        return Err(NGramError::InvalidConfig("lambdas must be >= 0".into()));
    }
    let sum: f64 = lambdas.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(NGramError::InvalidConfig(format!(
            "lambdas must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

fn reserved_words() -> Vec<String> {
    vec![BOS.to_owned(), EOS.to_owned(), UNK.to_owned()]
}

fn count_ngrams(
    docs: &[&Document],
    index: &HashMap<String, u32>,
    order: usize,
) -> Vec<HashMap<Vec<u32>, CountTable>> {
    let mut counts: Vec<HashMap<Vec<u32>, CountTable>> = vec![HashMap::new(); order];
    for doc in docs {
        let mut seq: Vec<u32> = vec![BOS_ID; order - 1];
        seq.extend(
            doc.words
                .iter()
                .map(|w| index.get(w.as_str()).copied().unwrap_or(UNK_ID)),
        );
        seq.push(EOS_ID);
        for p in (order - 1)..seq.len() {
            let target = seq[p];
            for k in 1..=order {
                let ctx = &seq[p - (k - 1)..p];
                let table = match counts[k - 1].get_mut(ctx) {
                    Some(t) => t,
                    None => counts[k - 1].entry(ctx.to_vec()).or_default(),
                };
                table.total += 1;
                *table.next.entry(target).or_insert(0) += 1;
            }
        }
    }
    counts
}

fn merge_counts(
    mut into: Vec<HashMap<Vec<u32>, CountTable>>,
    from: Vec<HashMap<Vec<u32>, CountTable>>,
) -> Vec<HashMap<Vec<u32>, CountTable>> {
    for (dst, src) in into.iter_mut().zip(from) {
        for (ctx, table) in src {
            let entry = dst.entry(ctx).or_default();
            entry.total += table.total;
            for (word, count) in table.next {
                *entry.next.entry(word).or_insert(0) += count;
            }
        }
    }
    into
}

/// Train a model over documents. Counting is sharded across `workers` and
/// merged; the result is independent of the worker count.
pub fn train(
    docs: &[Document],
    cfg: &TrainConfig,
    workers: usize,
) -> Result<NGramModel, NGramError> {
    if cfg.order < 1 {
        return Err(NGramError::InvalidConfig("order must be >= 1".into()));
    }
    if cfg.alpha < 0.0 {
        return Err(NGramError::InvalidConfig("alpha must be >= 0".into()));
    }
    let lambdas = cfg
        .lambdas
        .clone()
        .unwrap_or_else(|| default_lambdas(cfg.order));
    validate_lambdas(cfg.order, &lambdas)?;
    if docs.is_empty() {
        return Err(NGramError::EmptyCorpus);
    }

    let workers = workers.max(1);
    let refs: Vec<&Document> = docs.iter().collect();
    let chunk = refs.len().div_ceil(workers);

    // Pass 1: raw word frequencies, to pick the vocabulary.
    let raw: HashMap<String, u64> = thread::scope(|scope| {
        let handles: Vec<_> = refs
            .chunks(chunk)
            .map(|shard| {
                scope.spawn(move || {
                    let mut freq: HashMap<String, u64> = HashMap::new();
                    for doc in shard {
                        for word in &doc.words {
                            *freq.entry(word.clone()).or_insert(0) += 1;
                        }
                    }
                    freq
                })
            })
            .collect();
        let mut freq: HashMap<String, u64> = HashMap::new();
        for handle in handles {
            for (word, count) in handle.join().expect("count worker panicked") {
                *freq.entry(word).or_insert(0) += count;
            }
        }
        freq
    });

    let mut kept: Vec<String> = raw
        .into_iter()
        .filter(|(word, count)| *count >= cfg.min_count && !reserved_words().contains(word))
        .map(|(word, _)| word)
        .collect();
    kept.sort();
    let mut words = reserved_words();
    words.extend(kept);
    let index: HashMap<String, u32> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i as u32))
        .collect();

    // Pass 2: n-gram counts, shard and merge.
    let counts = thread::scope(|scope| {
        let index = &index;
        let handles: Vec<_> = refs
            .chunks(chunk)
            .map(|shard| scope.spawn(move || count_ngrams(shard, index, cfg.order)))
            .collect();
        let mut counts: Vec<HashMap<Vec<u32>, CountTable>> = vec![HashMap::new(); cfg.order];
        for handle in handles {
            counts = merge_counts(counts, handle.join().expect("count worker panicked"));
        }
        counts
    });

    Ok(NGramModel {
        order: cfg.order,
        alpha: cfg.alpha,
        min_count: cfg.min_count,
        lambdas,
        words,
        index,
        counts,
    })
}

impl NGramModel {
    /// A uniform unigram: every vocabulary entry (the given words plus the
    /// three reserved tokens) has probability `1 / |vocab|`, so the
    /// perplexity of any text equals the vocabulary size exactly.
    pub fn uniform<I, S>(vocab_words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut kept: Vec<String> = vocab_words
            .into_iter()
            .map(Into::into)
            .filter(|w| !reserved_words().contains(w))
            .collect();
        kept.sort();
        kept.dedup();
        let mut words = reserved_words();
        words.extend(kept);
        let index: HashMap<String, u32> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let mut table = CountTable::default();
        for id in 0..words.len() as u32 {
            table.total += 1;
            table.next.insert(id, 1);
        }
        let mut unigram = HashMap::new();
        unigram.insert(Vec::new(), table);
        NGramModel {
            order: 1,
            alpha: 0.0,
            min_count: 0,
            lambdas: vec![1.0],
            words,
            index,
            counts: vec![unigram],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    /// Sorted vocabulary, reserved tokens included.
    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    fn word_id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    fn unigram_prob(&self, word: u32) -> f64 {
        let table = self.counts[0].get([].as_slice()).expect("unigram table");
        let count = table.next.get(&word).copied().unwrap_or(0);
        (count as f64 + self.alpha) / (table.total as f64 + self.alpha * self.words.len() as f64)
    }

    /// Interpolated P(word | context ids); context is the full preceding
    /// window, longest-order suffixes are used per order.
    fn conditional(&self, context: &[u32], word: u32) -> f64 {
        let mut prob = 0.0;
        let mut carry = 0.0;
        for k in (2..=self.order).rev() {
            let lambda = self.lambdas[self.order - k];
            let ctx_len = k - 1;
            let ctx = &context[context.len() - ctx_len..];
            match self.counts[k - 1].get(ctx) {
                Some(table) if table.total > 0 => {
                    let count = table.next.get(&word).copied().unwrap_or(0);
                    prob += (lambda + carry) * (count as f64 / table.total as f64);
                    carry = 0.0;
                }
                _ => carry += lambda,
            }
        }
        prob += (self.lambdas[self.order - 1] + carry) * self.unigram_prob(word);
        prob
    }

    /// Interpolated probability by word strings; context shorter than
    /// `order - 1` words is BOS-padded. Intended for inspection and tests.
    pub fn probability(&self, context: &[&str], word: &str) -> f64 {
        let mut ids = vec![BOS_ID; (self.order - 1).saturating_sub(context.len())];
        ids.extend(context.iter().map(|w| self.word_id(w)));
        self.conditional(&ids, self.word_id(word))
    }

    /// Score a text: whitespace words, OOV mapped to `<unk>`, EOS appended.
    /// An empty text scores EOS alone.
    pub fn score(&self, text: &str) -> ScoreResult {
        let mut seq: Vec<u32> = vec![BOS_ID; self.order - 1];
        seq.extend(text.split_whitespace().map(|w| self.word_id(w)));
        seq.push(EOS_ID);
        let per_token_nll: Vec<f64> = ((self.order - 1)..seq.len())
            .map(|p| -self.conditional(&seq[..p], seq[p]).ln())
            .collect();
        ScoreResult {
            total_nll: per_token_nll.iter().sum(),
            token_count: per_token_nll.len(),
            per_token_nll,
        }
    }

    /// Corpus-level perplexity over texts.
    pub fn corpus_perplexity(&self, texts: &[String]) -> Result<f64, NGramError> {
        if texts.is_empty() {
            return Err(NGramError::EmptyInput);
        }
        let results: Vec<ScoreResult> = texts.iter().map(|t| self.score(t)).collect();
        Ok(aggregate_perplexity(&results).expect("every text scores at least EOS"))
    }

    /// Mean of per-text perplexities over texts.
    pub fn mean_example_perplexity(&self, texts: &[String]) -> Result<f64, NGramError> {
        if texts.is_empty() {
            return Err(NGramError::EmptyInput);
        }
        let results: Vec<ScoreResult> = texts.iter().map(|t| self.score(t)).collect();
        Ok(mean_example_perplexity(&results).expect("non-empty"))
    }

    /// Write the model as a versioned JSON container with sorted keys, so
    /// retraining on the same corpus produces byte-identical files.
    pub fn save(&self, path: &Path) -> Result<(), NGramError> {
        let file = ModelFile::from(self);
        let json = serde_json::to_string(&file).expect("serializable model");
        std::fs::write(path, json).map_err(|source| NGramError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, NGramError> {
        let bytes = std::fs::read(path).map_err(|source| NGramError::Io {
            path: path.to_owned(),
            source,
        })?;
        let file: ModelFile =
            serde_json::from_slice(&bytes).map_err(|source| NGramError::Json {
                path: path.to_owned(),
                source,
            })?;
        file.into_model()
    }
}

/// One serialized context row: `(context words, sorted (word, count) pairs)`.
type CountRow = (Vec<String>, Vec<(String, u64)>);

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    order: usize,
    alpha: f64,
    min_count: u64,
    lambdas: Vec<f64>,
    vocab: Vec<String>,
    /// Per order: sorted context rows.
    counts: Vec<Vec<CountRow>>,
}

impl From<&NGramModel> for ModelFile {
    fn from(model: &NGramModel) -> Self {
        let word_of = |id: &u32| model.words[*id as usize].clone();
        let counts = model
            .counts
            .iter()
            .map(|tables| {
                let mut rows: Vec<CountRow> = tables
                    .iter()
                    .map(|(ctx, table)| {
                        let ctx_words: Vec<String> = ctx.iter().map(word_of).collect();
                        let mut next: Vec<(String, u64)> =
                            table.next.iter().map(|(w, c)| (word_of(w), *c)).collect();
                        next.sort();
                        (ctx_words, next)
                    })
                    .collect();
                rows.sort();
                rows
            })
            .collect();
        ModelFile {
            format: MODEL_FORMAT.to_owned(),
            version: MODEL_VERSION,
            order: model.order,
            alpha: model.alpha,
            min_count: model.min_count,
            lambdas: model.lambdas.clone(),
            vocab: model.words.clone(),
            counts,
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<NGramModel, NGramError> {
        if self.format != MODEL_FORMAT {
            return Err(NGramError::BadModel(format!(
                "unknown format {:?}",
                self.format
            )));
        }
        if self.version != MODEL_VERSION {
            return Err(NGramError::BadModel(format!(
                "unsupported version {}",
                self.version
            )));
        }
        if self.counts.len() != self.order {
            return Err(NGramError::BadModel(
                "count tables do not match order".into(),
            ));
        }
        validate_lambdas(self.order, &self.lambdas)?;
        for reserved in reserved_words() {
            if !self.vocab.contains(&reserved) {
                return Err(NGramError::BadModel(format!(
                    "vocab missing reserved token {reserved:?}"
                )));
            }
        }
        let mut words = reserved_words();
        words.extend(
            self.vocab
                .iter()
                .filter(|w| !reserved_words().contains(w))
                .cloned(),
        );
        let index: HashMap<String, u32> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let id_of = |word: &str| -> Result<u32, NGramError> {
            index.get(word).copied().ok_or_else(|| {
                NGramError::BadModel(format!("count entry for unknown word {word:?}"))
            })
        };
        let mut counts: Vec<HashMap<Vec<u32>, CountTable>> = vec![HashMap::new(); self.order];
        for (k, rows) in self.counts.iter().enumerate() {
            for (ctx_words, next_words) in rows {
                if ctx_words.len() != k {
                    return Err(NGramError::BadModel(format!(
                        "order-{} context of length {}",
                        k + 1,
                        ctx_words.len()
                    )));
                }
                let ctx: Vec<u32> = ctx_words
                    .iter()
                    .map(|w| id_of(w))
                    .collect::<Result<_, _>>()?;
                let mut table = CountTable::default();
                for (word, count) in next_words {
                    table.total += count;
                    table.next.insert(id_of(word)?, *count);
                }
                counts[k].insert(ctx, table);
            }
        }
        Ok(NGramModel {
            order: self.order,
            alpha: self.alpha,
            min_count: self.min_count,
            lambdas: self.lambdas,
            words,
            index,
            counts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use proptest::prelude::*;

    fn docs_from(texts: &[&str]) -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| tokenize(&format!("d{i}"), t).unwrap())
            .collect()
    }

    #[test]
    fn unigram_hand_counts() {
        // Two documents "a b." and "a c.": events a,b.,EOS,a,c.,EOS.
        let docs = docs_from(&["a b.", "a c."]);
        let cfg = TrainConfig {
            order: 1,
            alpha: 0.0,
            min_count: 1,
            lambdas: None,
        };
        let model = train(&docs, &cfg, 1).unwrap();
        assert!((model.probability(&[], "a") - 2.0 / 6.0).abs() < 1e-15);
        assert!((model.probability(&[], "b.") - 1.0 / 6.0).abs() < 1e-15);
        assert!((model.probability(&[], "c.") - 1.0 / 6.0).abs() < 1e-15);
        assert!((model.probability(&[], EOS) - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        let words: Vec<String> = (0..47).map(|i| format!("w{i}")).collect();
        let model = NGramModel::uniform(words);
        assert_eq!(model.vocab_size(), 50);
        let text = "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9";
        let ppl = model.corpus_perplexity(&[text.to_owned()]).unwrap();
        assert!((ppl - 50.0).abs() < 1e-9, "ppl={ppl}");
    }

    #[test]
    fn bigram_hand_oracle() {
        // Frozen from an independent arithmetic oracle: order 2, alpha 0.1,
        // lambdas (0.7, 0.3), corpus "a b a b a b", text "a b a b".
        let docs = docs_from(&["a b a b a b"]);
        let cfg = TrainConfig {
            order: 2,
            alpha: 0.1,
            min_count: 1,
            lambdas: None,
        };
        let model = train(&docs, &cfg, 1).unwrap();
        let result = model.score("a b a b");
        let expected = [
            0.1935847490726654,
            0.1935847490726654,
            0.5265034364852205,
            0.1935847490726654,
            1.2825351268290381,
        ];
        assert_eq!(result.token_count, 5);
        for (got, want) in result.per_token_nll.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
        assert!((result.total_nll - 2.3897928105322546).abs() < 1e-12);
    }

    #[test]
    fn empty_text_scores_eos_only() {
        let model = NGramModel::uniform(["a", "b"]);
        let result = model.score("");
        assert_eq!(result.token_count, 1);
    }

    #[test]
    fn score_result_is_consistent() {
        let docs = docs_from(&["a b c d e a b c", "c d e a b"]);
        let model = train(
            &docs,
            &TrainConfig {
                min_count: 1,
                ..TrainConfig::default()
            },
            1,
        )
        .unwrap();
        let result = model.score("a b c x y z");
        assert_eq!(result.token_count, result.per_token_nll.len());
        let sum: f64 = result.per_token_nll.iter().sum();
        assert!((result.total_nll - sum).abs() < 1e-9);
        assert!(result.total_nll.is_finite());
    }

    #[test]
    fn corpus_perplexity_arithmetic() {
        // exp((10 + 20) / (5 + 10)) = e^2
        let results = [
            ScoreResult::from_total(10.0, 5),
            ScoreResult::from_total(20.0, 10),
        ];
        let ppl = aggregate_perplexity(&results).unwrap();
        assert!((ppl - std::f64::consts::E.powi(2)).abs() < 1e-9);
    }

    #[test]
    fn corpus_perplexity_scale_invariant() {
        let model = NGramModel::uniform((0..7).map(|i| format!("w{i}")));
        let text = "w0 w1 w2".to_owned();
        let single = model
            .corpus_perplexity(std::slice::from_ref(&text))
            .unwrap();
        let doubled = model
            .corpus_perplexity(&[text.clone(), text.clone()])
            .unwrap();
        assert!((single - doubled).abs() < 1e-12);
        assert!(matches!(
            model.corpus_perplexity(&[]),
            Err(NGramError::EmptyInput)
        ));
    }

    #[test]
    fn training_is_deterministic_across_workers() {
        let texts: Vec<String> = (0..60)
            .map(|i| {
                (0..40)
                    .map(|j| format!("w{}", (i * 7 + j * 3) % 23))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let docs: Vec<Document> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| tokenize(&format!("d{i}"), t).unwrap())
            .collect();
        let cfg = TrainConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.ngm");
        let p8 = dir.path().join("eight.ngm");
        train(&docs, &cfg, 1).unwrap().save(&p1).unwrap();
        train(&docs, &cfg, 8).unwrap().save(&p8).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p8).unwrap(),
            "model files differ across worker counts"
        );
    }

    #[test]
    fn save_load_round_trip_bit_identical_nlls() {
        let docs = docs_from(&["the cat sat on the mat", "the dog sat on the rug"]);
        let cfg = TrainConfig {
            min_count: 1,
            ..TrainConfig::default()
        };
        let model = train(&docs, &cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ngm");
        model.save(&path).unwrap();
        let loaded = NGramModel::load(&path).unwrap();
        for text in ["the cat sat on the rug", "a completely unseen sentence"] {
            let a = model.score(text);
            let b = loaded.score(text);
            assert_eq!(
                a.per_token_nll, b.per_token_nll,
                "NLLs changed after reload"
            );
        }
    }

    #[test]
    fn normalization_over_vocab() {
        let docs = docs_from(&["a b c a b", "b c d e", "e d c b a"]);
        let cfg = TrainConfig {
            min_count: 1,
            ..TrainConfig::default()
        };
        let model = train(&docs, &cfg, 1).unwrap();
        // seen bigram/trigram contexts, an unseen context, and BOS padding
        let contexts: Vec<Vec<&str>> = vec![
            vec![],
            vec!["a"],
            vec!["a", "b"],
            vec!["zz", "qq"],
            vec!["b", "c"],
        ];
        let vocab: Vec<String> = model.vocab().map(str::to_owned).collect();
        for ctx in contexts {
            let sum: f64 = vocab.iter().map(|w| model.probability(&ctx, w)).sum();
            assert!((sum - 1.0).abs() < 1e-9, "context {ctx:?} sums to {sum}");
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let docs = docs_from(&["a b"]);
        assert!(matches!(
            train(
                &docs,
                &TrainConfig {
                    order: 0,
                    ..TrainConfig::default()
                },
                1
            ),
            Err(NGramError::InvalidConfig(_))
        ));
        assert!(matches!(
            train(
                &docs,
                &TrainConfig {
                    lambdas: Some(vec![0.5, 0.2, 0.2]),
                    ..TrainConfig::default()
                },
                1
            ),
            Err(NGramError::InvalidConfig(_))
        ));
        assert!(matches!(
            train(&[], &TrainConfig::default(), 1),
            Err(NGramError::EmptyCorpus)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn trained_corpus_no_less_fluent_than_shuffled(seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::Rng;

            // Markov-ish corpus: successor sets make real structure.
            let mut rng = crate::rng::derive_rng(seed, &["ngram", "monotonic"]);
            let vocab: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
            let texts: Vec<String> = (0..30)
                .map(|_| {
                    let mut word = rng.gen_range(0..vocab.len());
                    let mut words = Vec::new();
                    for _ in 0..30 {
                        words.push(vocab[word].clone());
                        let choices = [(word * 3 + 1) % 20, (word * 5 + 2) % 20];
                        word = choices[rng.gen_range(0..choices.len())];
                    }
                    words.join(" ")
                })
                .collect();
            let docs: Vec<Document> = texts
                .iter()
                .enumerate()
                .map(|(i, t)| tokenize(&format!("d{i}"), t).unwrap())
                .collect();
            let model = train(
                &docs,
                &TrainConfig { min_count: 1, ..TrainConfig::default() },
                2,
            )
            .unwrap();

            let shuffled: Vec<String> = texts
                .iter()
                .map(|t| {
                    let mut words: Vec<&str> = t.split_whitespace().collect();
                    words.shuffle(&mut rng);
                    words.join(" ")
                })
                .collect();
            let fit = model.corpus_perplexity(&texts).unwrap();
            let broken = model.corpus_perplexity(&shuffled).unwrap();
            prop_assert!(
                fit <= broken,
                "training corpus ppl {fit} > shuffled ppl {broken}"
            );
        }
    }
}
