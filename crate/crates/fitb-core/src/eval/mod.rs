//! Evaluation metrics over generation records.
//!
//! Three metrics mirror the conditioning signals and the fluency check:
//!
//! - **length accuracy** — fraction of generations whose word count lands
//!   in the example's target bucket;
//! - **goal accuracy** — fraction of goal-conditioned examples whose
//!   generation uses all goal words (case-folded, punctuation-stripped,
//!   multiset containment; a contiguous-match variant is also reported);
//! - **fluency perplexity** — corpus perplexity of the passages with the
//!   generation placed in the blank, next to the same passages filled with
//!   groundtruth.
//!
//! All metrics are aggregates over unordered record sets, so shuffling
//! records never changes a value.

pub mod remote;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blanking::{bucketize, join_segments, FitBExample};
use crate::generators::GenerationRecord;
use crate::ngram::{aggregate_perplexity, mean_example_perplexity, NGramModel, ScoreResult};
use crate::text::{contains_goal_contiguous, contains_goal_words};

pub use remote::RemoteScorer;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("generation record for unknown example id {0:?}")]
    UnknownExampleId(String),
    #[error("no evaluated example carries a goal")]
    NoGoalExamples,
    #[error("no generation records to evaluate")]
    NoRecords,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors from a fluency scorer backend.
#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("remote scorer returned {status}: {message}")]
    Remote { status: u16, message: String },
}

/// Scores batches of texts; implemented by the in-repo n-gram model and the
/// remote HTTP client. Swapping scorers changes fluency values and nothing
/// else.
pub trait Scorer {
    fn score_batch(&self, texts: &[String]) -> Result<Vec<ScoreResult>, ScorerError>;
}

impl Scorer for NGramModel {
    fn score_batch(&self, texts: &[String]) -> Result<Vec<ScoreResult>, ScorerError> {
        Ok(texts.iter().map(|t| self.score(t)).collect())
    }
}

/// Place a generation in the blank: left, generation, right joined with
/// single spaces, empty segments elided.
pub fn fill(example: &FitBExample, generation: &[String]) -> String {
    join_segments(&[
        &example.left.join(" "),
        &generation.join(" "),
        &example.right.join(" "),
    ])
}

fn resolve<'a>(
    records: &'a [GenerationRecord],
    examples: &'a [FitBExample],
) -> Result<Vec<(&'a GenerationRecord, &'a FitBExample)>, EvalError> {
    let by_id: HashMap<&str, &FitBExample> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
    records
        .iter()
        .map(|record| {
            by_id
                .get(record.example_id.as_str())
                .map(|example| (record, *example))
                .ok_or_else(|| EvalError::UnknownExampleId(record.example_id.clone()))
        })
        .collect()
}

/// Fraction of records whose generation word count buckets to the example's
/// bucket. Empty generations never match.
pub fn length_accuracy(
    records: &[GenerationRecord],
    examples: &[FitBExample],
) -> Result<f64, EvalError> {
    let pairs = resolve(records, examples)?;
    if pairs.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let hits = pairs
        .iter()
        .filter(|(record, example)| {
            bucketize(record.generation.len())
                .map(|b| b == example.bucket)
                .unwrap_or(false)
        })
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Goal accuracy under both matching rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoalAccuracy {
    /// All goal words present (multiset, normalized) — the default metric.
    pub all_words: f64,
    /// Goal appears as a contiguous normalized word run.
    pub contiguous: f64,
    pub n_goal_examples: usize,
}

/// Accuracy over goal-conditioned examples only.
pub fn goal_accuracy(
    records: &[GenerationRecord],
    examples: &[FitBExample],
) -> Result<GoalAccuracy, EvalError> {
    let pairs = resolve(records, examples)?;
    let goal_pairs: Vec<_> = pairs
        .iter()
        .filter_map(|(record, example)| example.goal.as_ref().map(|goal| (record, goal)))
        .collect();
    if goal_pairs.is_empty() {
        return Err(EvalError::NoGoalExamples);
    }
    let n = goal_pairs.len();
    let all_words = goal_pairs
        .iter()
        .filter(|(record, goal)| contains_goal_words(goal, &record.generation))
        .count() as f64
        / n as f64;
    let contiguous = goal_pairs
        .iter()
        .filter(|(record, goal)| contains_goal_contiguous(goal, &record.generation))
        .count() as f64
        / n as f64;
    Ok(GoalAccuracy {
        all_words,
        contiguous,
        n_goal_examples: n,
    })
}

/// Fluency of filled passages, for generations and groundtruth over the
/// same example set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fluency {
    /// Corpus perplexity with generations in the blank.
    pub ppl_generated: f64,
    /// Corpus perplexity with the groundtruth target in the blank.
    pub ppl_groundtruth: f64,
    /// Secondary aggregation: mean of per-example perplexities.
    pub mean_example_ppl_generated: f64,
    pub mean_example_ppl_groundtruth: f64,
}

pub fn fluency(
    records: &[GenerationRecord],
    examples: &[FitBExample],
    scorer: &dyn Scorer,
) -> Result<Fluency, EvalError> {
    let pairs = resolve(records, examples)?;
    if pairs.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let filled_generated: Vec<String> = pairs
        .iter()
        .map(|(record, example)| fill(example, &record.generation))
        .collect();
    let filled_groundtruth: Vec<String> = pairs
        .iter()
        .map(|(_, example)| fill(example, &example.target))
        .collect();
    let generated = scorer.score_batch(&filled_generated)?;
    let groundtruth = scorer.score_batch(&filled_groundtruth)?;
    Ok(Fluency {
        ppl_generated: aggregate_perplexity(&generated).expect("non-empty scores"),
        ppl_groundtruth: aggregate_perplexity(&groundtruth).expect("non-empty scores"),
        mean_example_ppl_generated: mean_example_perplexity(&generated).expect("non-empty"),
        mean_example_ppl_groundtruth: mean_example_perplexity(&groundtruth).expect("non-empty"),
    })
}

/// One histogram bin: `bin_lo <= word count < bin_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_lo: usize,
    pub bin_hi: usize,
    pub groundtruth_count: usize,
    pub generation_count: usize,
}

/// Paired word-count histograms of groundtruth targets and generations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthHistogram {
    pub bins: Vec<HistogramBin>,
    pub mean_target_words: f64,
    pub mean_generation_words: f64,
    /// True when generations are shorter than groundtruth on average.
    pub shorter_than_groundtruth: bool,
}

/// Histogram generations against groundtruth over identical bins.
///
/// With `bins = None`, unit-width bins covering every observed count are
/// used, so bin counts sum to the number of records. Explicit bins count
/// only values they cover.
pub fn length_histogram(
    records: &[GenerationRecord],
    examples: &[FitBExample],
    bins: Option<&[(usize, usize)]>,
) -> Result<LengthHistogram, EvalError> {
    let pairs = resolve(records, examples)?;
    if pairs.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let target_lens: Vec<usize> = pairs.iter().map(|(_, e)| e.target.len()).collect();
    let generation_lens: Vec<usize> = pairs.iter().map(|(r, _)| r.generation.len()).collect();
    let owned_bins: Vec<(usize, usize)> = match bins {
        Some(bins) => bins.to_vec(),
        None => {
            let max = target_lens
                .iter()
                .chain(generation_lens.iter())
                .copied()
                .max()
                .unwrap_or(0);
            (0..=max).map(|lo| (lo, lo + 1)).collect()
        }
    };
    let mut rows: Vec<HistogramBin> = owned_bins
        .iter()
        .map(|&(bin_lo, bin_hi)| HistogramBin {
            bin_lo,
            bin_hi,
            groundtruth_count: 0,
            generation_count: 0,
        })
        .collect();
    for &len in &target_lens {
        if let Some(row) = rows.iter_mut().find(|r| r.bin_lo <= len && len < r.bin_hi) {
            row.groundtruth_count += 1;
        }
    }
    for &len in &generation_lens {
        if let Some(row) = rows.iter_mut().find(|r| r.bin_lo <= len && len < r.bin_hi) {
            row.generation_count += 1;
        }
    }
    let mean = |lens: &[usize]| lens.iter().sum::<usize>() as f64 / lens.len() as f64;
    let mean_target_words = mean(&target_lens);
    let mean_generation_words = mean(&generation_lens);
    Ok(LengthHistogram {
        bins: rows,
        mean_target_words,
        mean_generation_words,
        shorter_than_groundtruth: mean_generation_words < mean_target_words,
    })
}

/// Render the histogram as CSV for plotting.
pub fn histogram_csv(histogram: &LengthHistogram) -> String {
    let mut out = String::from("bin_lo,bin_hi,groundtruth_count,generation_count\n");
    for bin in &histogram.bins {
        out.push_str(&format!(
            "{},{},{},{}\n",
            bin.bin_lo, bin.bin_hi, bin.groundtruth_count, bin.generation_count
        ));
    }
    out
}

pub fn write_histogram_csv(path: &Path, histogram: &LengthHistogram) -> Result<(), EvalError> {
    std::fs::write(path, histogram_csv(histogram))?;
    Ok(())
}

/// Per-dataset metric report.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub dataset_name: String,
    pub generator_name: String,
    pub n_examples: usize,
    pub fluency_ppl: f64,
    pub fluency_ppl_groundtruth: f64,
    pub fluency_ppl_mean_example: f64,
    pub fluency_ppl_groundtruth_mean_example: f64,
    pub length_accuracy: f64,
    /// Absent when no evaluated example carries a goal.
    pub goal_accuracy: Option<f64>,
    pub goal_accuracy_contiguous: Option<f64>,
    pub mean_target_words: f64,
    pub mean_generation_words: f64,
    pub shorter_than_groundtruth: bool,
    pub length_histogram: Vec<HistogramBin>,
    /// Examples with no generation record (e.g. skipped by prompt budgets).
    pub skipped: usize,
}

/// Compute every metric over one record set.
pub fn evaluate(
    dataset_name: &str,
    generator_name: &str,
    examples: &[FitBExample],
    records: &[GenerationRecord],
    scorer: &dyn Scorer,
) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let length = length_accuracy(records, examples)?;
    let goal = match goal_accuracy(records, examples) {
        Ok(goal) => Some(goal),
        Err(EvalError::NoGoalExamples) => None,
        Err(err) => return Err(err),
    };
    let fluency = fluency(records, examples, scorer)?;
    let histogram = length_histogram(records, examples, None)?;
    let covered: HashSet<&str> = records.iter().map(|r| r.example_id.as_str()).collect();
    let skipped = examples
        .iter()
        .filter(|e| !covered.contains(e.id.as_str()))
        .count();
    Ok(EvalReport {
        dataset_name: dataset_name.to_owned(),
        generator_name: generator_name.to_owned(),
        n_examples: records.len(),
        fluency_ppl: fluency.ppl_generated,
        fluency_ppl_groundtruth: fluency.ppl_groundtruth,
        fluency_ppl_mean_example: fluency.mean_example_ppl_generated,
        fluency_ppl_groundtruth_mean_example: fluency.mean_example_ppl_groundtruth,
        length_accuracy: length,
        goal_accuracy: goal.map(|g| g.all_words),
        goal_accuracy_contiguous: goal.map(|g| g.contiguous),
        mean_target_words: histogram.mean_target_words,
        mean_generation_words: histogram.mean_generation_words,
        shorter_than_groundtruth: histogram.shorter_than_groundtruth,
        length_histogram: histogram.bins,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blanking::{build_dataset, MixtureConfig, MixtureSetting};
    use crate::corpus::tokenize;
    use crate::generators::{null_generate, oracle_generate, random_generate, RedactedExample};
    use crate::ngram::{train, TrainConfig};
    use crate::rng::derive_rng;

    fn words(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_owned).collect()
    }

    fn sample_docs(n: usize) -> Vec<crate::corpus::Document> {
        (0..n)
            .map(|i| {
                let text: Vec<String> = (0..80)
                    .map(|j| {
                        let w = format!("w{}", (i * 13 + j * 7) % 40);
                        if j % 8 == 7 {
                            format!("{w}.")
                        } else {
                            w
                        }
                    })
                    .collect();
                tokenize(&format!("doc-{i:04}"), &text.join(" ")).unwrap()
            })
            .collect()
    }

    fn built(n: usize, goal_fraction: f64) -> Vec<FitBExample> {
        let docs = sample_docs(n);
        let cfg = MixtureConfig {
            setting: MixtureSetting::FillBlankCont,
            goal_fraction,
            seed: 5,
        };
        build_dataset(&docs, &cfg).unwrap().0
    }

    #[test]
    fn fill_reconstructs_with_oracle() {
        let examples = built(20, 0.5);
        for example in &examples {
            assert_eq!(fill(example, &example.target), example.window_text());
        }
    }

    #[test]
    fn fill_edge_cases() {
        let mut example = built(1, 0.0).remove(0);
        example.right = Vec::new();
        assert_eq!(
            fill(&example, &words("gen words")),
            format!("{} gen words", example.left.join(" "))
        );
        assert_eq!(fill(&example, &[]), example.left.join(" "));
    }

    #[test]
    fn oracle_scores_perfectly() {
        let examples = built(50, 1.0);
        let records: Vec<_> = examples
            .iter()
            .map(|e| oracle_generate(e).unwrap())
            .collect();
        assert_eq!(length_accuracy(&records, &examples).unwrap(), 1.0);
        let goal = goal_accuracy(&records, &examples).unwrap();
        assert_eq!(goal.all_words, 1.0);
        assert_eq!(goal.contiguous, 1.0);
        assert!(goal.n_goal_examples > 0);
    }

    #[test]
    fn length_accuracy_counts_bucket_misses() {
        let examples = built(1, 0.0);
        let mut record = oracle_generate(&examples[0]).unwrap();
        // 20 words buckets to 16; only matches if the example bucket is 16
        record.generation = (0..20).map(|i| format!("g{i}")).collect();
        let acc = length_accuracy(&[record], &examples).unwrap();
        let expect = if examples[0].bucket.value() == 16 {
            1.0
        } else {
            0.0
        };
        assert_eq!(acc, expect);
    }

    #[test]
    fn unknown_example_id_is_an_error() {
        let examples = built(2, 0.0);
        let mut record = oracle_generate(&examples[0]).unwrap();
        record.example_id = "no-such-id".into();
        assert!(matches!(
            length_accuracy(&[record], &examples),
            Err(EvalError::UnknownExampleId(_))
        ));
    }

    #[test]
    fn goal_accuracy_requires_goals() {
        let examples = built(5, 0.0);
        let records: Vec<_> = examples
            .iter()
            .map(|e| oracle_generate(e).unwrap())
            .collect();
        assert!(matches!(
            goal_accuracy(&records, &examples),
            Err(EvalError::NoGoalExamples)
        ));
    }

    #[test]
    fn goal_accuracy_containment_cases() {
        let mut example = built(1, 0.0).remove(0);
        example.goal = Some(words("allergic to"));
        let hit = GenerationRecord {
            example_id: example.id.clone(),
            generation: words("I was allergic to nuts"),
            generator_name: "test".into(),
            decode_config: serde_json::Value::Null,
        };
        let examples = vec![example.clone()];
        let goal = goal_accuracy(std::slice::from_ref(&hit), &examples).unwrap();
        assert_eq!(goal.all_words, 1.0);
        let miss = GenerationRecord {
            generation: words("I was allergic"),
            ..hit
        };
        let goal = goal_accuracy(&[miss], &examples).unwrap();
        assert_eq!(goal.all_words, 0.0);
    }

    #[test]
    fn fluency_oracle_equals_groundtruth_and_random_is_worse() {
        let examples = built(60, 0.0);
        let docs = sample_docs(60);
        let model = train(
            &docs,
            &TrainConfig {
                min_count: 1,
                ..TrainConfig::default()
            },
            2,
        )
        .unwrap();

        let oracle_records: Vec<_> = examples
            .iter()
            .map(|e| oracle_generate(e).unwrap())
            .collect();
        let result = fluency(&oracle_records, &examples, &model).unwrap();
        assert!((result.ppl_generated - result.ppl_groundtruth).abs() < 1e-9);

        let vocab: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let random_records: Vec<_> = examples
            .iter()
            .map(|e| {
                let mut rng = derive_rng(1, &[&e.id, "generate:random"]);
                random_generate(&RedactedExample::from(e), &vocab, &mut rng).unwrap()
            })
            .collect();
        let random_result = fluency(&random_records, &examples, &model).unwrap();
        assert!(
            random_result.ppl_generated > result.ppl_groundtruth,
            "random infills should score less fluent: {} vs {}",
            random_result.ppl_generated,
            result.ppl_groundtruth
        );
    }

    #[test]
    fn histogram_oracle_is_identical_and_flags_shorter() {
        let examples = built(40, 0.0);
        let oracle_records: Vec<_> = examples
            .iter()
            .map(|e| oracle_generate(e).unwrap())
            .collect();
        let hist = length_histogram(&oracle_records, &examples, None).unwrap();
        for bin in &hist.bins {
            assert_eq!(bin.groundtruth_count, bin.generation_count);
        }
        assert!(!hist.shorter_than_groundtruth);
        let total: usize = hist.bins.iter().map(|b| b.groundtruth_count).sum();
        assert_eq!(total, examples.len());

        let null_records: Vec<_> = examples
            .iter()
            .map(|e| null_generate(&RedactedExample::from(e)))
            .collect();
        let hist = length_histogram(&null_records, &examples, None).unwrap();
        assert!(hist.shorter_than_groundtruth);
        assert_eq!(hist.mean_generation_words, 0.0);
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let examples = built(30, 0.6);
        let mut records: Vec<_> = examples
            .iter()
            .map(|e| oracle_generate(e).unwrap())
            .collect();
        let docs = sample_docs(30);
        let model = train(
            &docs,
            &TrainConfig {
                min_count: 1,
                ..TrainConfig::default()
            },
            1,
        )
        .unwrap();
        let before = evaluate("ds", "oracle", &examples, &records, &model).unwrap();
        records.reverse();
        records.rotate_left(7);
        let after = evaluate("ds", "oracle", &examples, &records, &model).unwrap();
        assert_eq!(before.length_accuracy, after.length_accuracy);
        assert_eq!(before.goal_accuracy, after.goal_accuracy);
        assert_eq!(before.fluency_ppl, after.fluency_ppl);
        assert_eq!(before.length_histogram, after.length_histogram);
    }

    #[test]
    fn evaluate_counts_skipped_examples() {
        let examples = built(10, 0.0);
        let records: Vec<_> = examples
            .iter()
            .take(7)
            .map(|e| oracle_generate(e).unwrap())
            .collect();
        let model = NGramModel::uniform(["w0", "w1"]);
        let report = evaluate("ds", "oracle", &examples, &records, &model).unwrap();
        assert_eq!(report.n_examples, 7);
        assert_eq!(report.skipped, 3);
        assert_eq!(report.length_accuracy, 1.0);
        assert!(report.goal_accuracy.is_none());
    }

    #[test]
    fn histogram_csv_shape() {
        let examples = built(5, 0.0);
        let records: Vec<_> = examples
            .iter()
            .map(|e| oracle_generate(e).unwrap())
            .collect();
        let hist = length_histogram(&records, &examples, None).unwrap();
        let csv = histogram_csv(&hist);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "bin_lo,bin_hi,groundtruth_count,generation_count"
        );
        assert_eq!(lines.count(), hist.bins.len());
    }

    #[test]
    fn swapping_scorers_changes_only_fluency() {
        let examples = built(25, 0.5);
        let records: Vec<_> = examples
            .iter()
            .map(|e| oracle_generate(e).unwrap())
            .collect();
        let trained = train(
            &sample_docs(25),
            &TrainConfig {
                min_count: 1,
                ..TrainConfig::default()
            },
            1,
        )
        .unwrap();
        let uniform = NGramModel::uniform((0..40).map(|i| format!("w{i}")));
        let a = evaluate("ds", "oracle", &examples, &records, &trained).unwrap();
        let b = evaluate("ds", "oracle", &examples, &records, &uniform).unwrap();
        assert_ne!(a.fluency_ppl, b.fluency_ppl);
        assert_eq!(a.length_accuracy, b.length_accuracy);
        assert_eq!(a.goal_accuracy, b.goal_accuracy);
        assert_eq!(a.length_histogram, b.length_histogram);
        assert_eq!(a.skipped, b.skipped);
    }
}
