//! Subcommand argument definitions and handlers.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use fitb_core::blanking::{
    build_dataset, build_evalset, BuildStats, ExampleRecord, FitBExample, MixtureConfig,
    MixtureSetting, Placement,
};
use fitb_core::corpus::{ingest_paths, Document, TruncationConfig};
use fitb_core::eval::{evaluate, write_histogram_csv, RemoteScorer, Scorer};
use fitb_core::generators::{
    goal_echo_generate, null_generate, oracle_generate, random_generate, retrieval_generate,
    GenerationRecord, RedactedExample, DEFAULT_RETRIEVAL_CANDIDATES,
};
use fitb_core::io::{read_jsonl, write_jsonl, write_tsv};
use fitb_core::ngram::{train, NGramModel, TrainConfig};
use fitb_core::prompting::{BudgetConfig, PromptBuilder, PromptTemplate};
use fitb_core::rng::derive_rng;

use crate::config::{resolve, FileConfig};
use crate::manifest::{
    config_hash, hash_files, write_manifest, DatasetSection, FinetuneRecipe, RunManifest,
};

/// Resolved global context shared by every subcommand.
pub struct Ctx {
    pub seed: u64,
    pub workers: usize,
    pub file: FileConfig,
    pub command_line: String,
}

pub fn parse_setting(s: &str) -> Result<MixtureSetting, String> {
    s.parse()
}

pub fn parse_placement(s: &str) -> Result<Placement, String> {
    s.parse()
}

// --- corpus ---------------------------------------------------------------

#[derive(Debug, Args)]
pub struct CorpusStatsArgs {
    /// Input JSONL files, one {"id", "text"} or {"id", "sentences"} per line.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    #[arg(long)]
    pub min_words: Option<usize>,
    #[arg(long)]
    pub max_words: Option<usize>,
    #[arg(long)]
    pub min_keep: Option<usize>,
}

fn truncation_config(
    ctx: &Ctx,
    min_words: Option<usize>,
    max_words: Option<usize>,
    min_keep: Option<usize>,
) -> TruncationConfig {
    let defaults = TruncationConfig::default();
    TruncationConfig {
        min_words: resolve(min_words, ctx.file.truncate.min_words, defaults.min_words),
        max_words: resolve(max_words, ctx.file.truncate.max_words, defaults.max_words),
        min_keep: resolve(min_keep, ctx.file.truncate.min_keep, defaults.min_keep),
    }
}

pub fn corpus_stats(ctx: &Ctx, args: CorpusStatsArgs) -> Result<()> {
    let cfg = truncation_config(ctx, args.min_words, args.max_words, args.min_keep);
    let (_, stats) = ingest_paths(&args.paths, &cfg, ctx.seed, ctx.workers)?;
    println!("documents: {}", stats.documents);
    println!("words: {}", stats.words);
    println!("sentences: {}", stats.sentences);
    println!("malformed: {}", stats.malformed);
    println!("skipped_short: {}", stats.skipped_short);
    Ok(())
}

// --- build ----------------------------------------------------------------

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("mode").required(true)))]
pub struct BuildArgs {
    /// Input corpus JSONL files.
    #[arg(long = "in", num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    /// Output directory for examples.jsonl, examples.tsv and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Training mixture: fillblank, fillblankcont or cont.
    #[arg(long, value_parser = parse_setting, group = "mode")]
    pub setting: Option<MixtureSetting>,
    /// Evaluation placement: random, end, middle-sentence or end-sentence.
    /// Eval sets carry no goal conditioning.
    #[arg(long, value_parser = parse_placement, group = "mode")]
    pub placement: Option<Placement>,
    #[arg(long)]
    pub goal_fraction: Option<f64>,
    /// Keep at most this many examples, first by document id order.
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub min_words: Option<usize>,
    #[arg(long)]
    pub max_words: Option<usize>,
    #[arg(long)]
    pub min_keep: Option<usize>,
}

#[derive(Serialize)]
struct ResolvedBuildConfig {
    truncate: TruncationConfigMirror,
    setting: Option<String>,
    placement: Option<String>,
    goal_fraction: f64,
    cap: Option<usize>,
    seed: u64,
    workers: usize,
}

#[derive(Serialize)]
struct TruncationConfigMirror {
    min_words: usize,
    max_words: usize,
    min_keep: usize,
}

pub fn build(ctx: &Ctx, args: BuildArgs) -> Result<()> {
    let truncate = truncation_config(ctx, args.min_words, args.max_words, args.min_keep);
    let setting = args.setting.or_else(|| {
        ctx.file
            .build
            .setting
            .as_deref()
            .and_then(|s| s.parse().ok())
    });
    let goal_fraction = resolve(args.goal_fraction, ctx.file.build.goal_fraction, 0.5);
    let cap = args.cap.or(ctx.file.build.cap);

    let (docs, ingest_stats) = ingest_paths(&args.input, &truncate, ctx.seed, ctx.workers)?;
    let (mut examples, stats): (Vec<FitBExample>, BuildStats) = match (setting, args.placement) {
        (Some(setting), None) => {
            let cfg = MixtureConfig {
                setting,
                goal_fraction,
                seed: ctx.seed,
            };
            build_dataset(&docs, &cfg)?
        }
        (None, Some(placement)) => {
            build_evalset(&docs, placement, cap.unwrap_or(usize::MAX), ctx.seed)
        }
        _ => bail!("exactly one of --setting or --placement is required"),
    };
    if let Some(cap) = cap {
        examples.truncate(cap);
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let records: Vec<ExampleRecord> = examples.iter().map(ExampleRecord::from).collect();
    write_jsonl(&args.out.join("examples.jsonl"), &records)?;
    let rows: Vec<(String, String)> = examples.iter().map(|e| e.serialized()).collect();
    write_tsv(&args.out.join("examples.tsv"), &rows)?;

    let resolved = ResolvedBuildConfig {
        truncate: TruncationConfigMirror {
            min_words: truncate.min_words,
            max_words: truncate.max_words,
            min_keep: truncate.min_keep,
        },
        setting: setting.map(|s| s.to_string()),
        placement: args.placement.map(|p| p.to_string()),
        goal_fraction,
        cap,
        seed: ctx.seed,
        workers: ctx.workers,
    };
    let manifest = RunManifest {
        command_line: ctx.command_line.clone(),
        seed: ctx.seed,
        config_hash: config_hash(&resolved),
        input_file_hashes: hash_files(&args.input)?,
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        dataset: DatasetSection {
            mode: if setting.is_some() {
                "train".into()
            } else {
                "eval".into()
            },
            setting: resolved.setting.clone(),
            placement: resolved.placement.clone(),
            goal_fraction: setting.is_some().then_some(goal_fraction),
            cap,
            examples: examples.len() as u64,
            skipped_short: ingest_stats.skipped_short + stats.skipped_short,
            clamped: stats.clamped,
            reference_finetune_recipe: FinetuneRecipe::default(),
        },
    };
    write_manifest(&args.out, &manifest)?;
    println!(
        "built {} examples ({} skipped short, {} clamped) -> {}",
        examples.len(),
        ingest_stats.skipped_short + stats.skipped_short,
        stats.clamped,
        args.out.display()
    );
    Ok(())
}

// --- fewshot ----------------------------------------------------------------

#[derive(Debug, Args)]
pub struct FewshotArgs {
    /// Pool of built examples (JSONL) to sample shots from.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    /// Output prompt text file; a .meta.json sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub per_shot: Option<usize>,
    #[arg(long)]
    pub prompt_budget: Option<usize>,
    #[arg(long)]
    pub query_reserve: Option<usize>,
}

#[derive(Serialize)]
struct PromptSidecar<'a> {
    shot_ids: &'a [String],
    shot_units: &'a [usize],
    unit_count: usize,
    k: usize,
    seed: u64,
    per_shot: usize,
    prompt_budget: usize,
    query_reserve: usize,
}

fn load_examples(path: &Path) -> Result<Vec<FitBExample>> {
    let records: Vec<ExampleRecord> = read_jsonl(path)?;
    records
        .into_iter()
        .map(|r| FitBExample::try_from(r).map_err(Into::into))
        .collect()
}

pub fn fewshot(ctx: &Ctx, args: FewshotArgs) -> Result<()> {
    let defaults = BudgetConfig::default();
    let budget = BudgetConfig {
        per_shot: resolve(args.per_shot, ctx.file.prompt.per_shot, defaults.per_shot),
        prompt: resolve(args.prompt_budget, ctx.file.prompt.budget, defaults.prompt),
        query_reserve: resolve(
            args.query_reserve,
            ctx.file.prompt.query_reserve,
            defaults.query_reserve,
        ),
    };
    let k = resolve(args.k, ctx.file.prompt.k, 3);
    let pool = load_examples(&args.pool)?;
    let builder = PromptBuilder::new(PromptTemplate::default(), budget);
    let prompt = builder.build_prompt(&pool, k, ctx.seed)?;
    std::fs::write(&args.out, &prompt.rendered)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let sidecar_path = args.out.with_extension("meta.json");
    let sidecar = PromptSidecar {
        shot_ids: &prompt.shot_ids,
        shot_units: &prompt.shot_units,
        unit_count: prompt.unit_count,
        k,
        seed: ctx.seed,
        per_shot: budget.per_shot,
        prompt_budget: budget.prompt,
        query_reserve: budget.query_reserve,
    };
    std::fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar)?)
        .with_context(|| format!("writing {}", sidecar_path.display()))?;
    println!(
        "wrote {}-shot prompt ({} units) -> {}",
        prompt.shot_ids.len(),
        prompt.unit_count,
        args.out.display()
    );
    Ok(())
}

// --- generate ---------------------------------------------------------------

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = ["oracle", "random", "retrieval", "goal-echo", "null"])]
    pub generator: String,
    /// Built examples to generate infills for (JSONL).
    #[arg(long)]
    pub examples: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Reference corpus JSONL; vocabulary source for random/goal-echo and
    /// span source for retrieval.
    #[arg(
        long,
        num_args = 1..,
        required_if_eq_any([
            ("generator", "random"),
            ("generator", "retrieval"),
            ("generator", "goal-echo"),
        ])
    )]
    pub reference: Vec<PathBuf>,
    /// Candidate spans sampled per example by the retrieval generator.
    #[arg(long)]
    pub candidates: Option<usize>,
}

/// Read documents without truncation (reference corpora, LM training).
fn read_documents_raw(paths: &[PathBuf], workers: usize) -> Result<Vec<Document>> {
    let cfg = TruncationConfig {
        min_words: 1,
        max_words: usize::MAX,
        min_keep: 1,
    };
    let (docs, stats) = ingest_paths(paths, &cfg, 0, workers)?;
    if stats.malformed > 0 {
        eprintln!(
            "warning: skipped {} malformed corpus lines",
            stats.malformed
        );
    }
    Ok(docs)
}

fn reference_vocab(reference: &[Document]) -> Vec<String> {
    let set: BTreeSet<&String> = reference.iter().flat_map(|d| d.words.iter()).collect();
    set.into_iter().cloned().collect()
}

pub fn generate(ctx: &Ctx, args: GenerateArgs) -> Result<()> {
    let examples = load_examples(&args.examples)?;
    let candidates = resolve(
        args.candidates,
        ctx.file.generate.candidates,
        DEFAULT_RETRIEVAL_CANDIDATES,
    );
    let reference = if args.reference.is_empty() {
        Vec::new()
    } else {
        read_documents_raw(&args.reference, ctx.workers)?
    };
    let vocab = reference_vocab(&reference);

    let mut records: Vec<GenerationRecord> = Vec::with_capacity(examples.len());
    for example in &examples {
        let purpose = format!("generate:{}", args.generator);
        let mut rng = derive_rng(ctx.seed, &[&example.id, &purpose]);
        let redacted = RedactedExample::from(example);
        let record = match args.generator.as_str() {
            "oracle" => oracle_generate(example)?,
            "random" => random_generate(&redacted, &vocab, &mut rng)?,
            "retrieval" => retrieval_generate(&redacted, &reference, candidates, &mut rng)?,
            "goal-echo" => goal_echo_generate(&redacted, &vocab, &mut rng)?,
            "null" => null_generate(&redacted),
            other => bail!("unknown generator {other:?}"),
        };
        records.push(record);
    }
    write_jsonl(&args.out, &records)?;
    println!(
        "generated {} records with {} -> {}",
        records.len(),
        args.generator,
        args.out.display()
    );
    Ok(())
}

// --- evaluate ---------------------------------------------------------------

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub examples: PathBuf,
    #[arg(long)]
    pub generations: PathBuf,
    /// `ngram:<model path>` or an http(s) endpoint URL.
    #[arg(long)]
    pub scorer: String,
    /// Report JSON output path.
    #[arg(long)]
    pub report: PathBuf,
    /// Optional length-histogram CSV output path.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long)]
    pub dataset_name: Option<String>,
}

fn make_scorer(spec: &str) -> Result<Box<dyn Scorer>> {
    if let Some(path) = spec.strip_prefix("ngram:") {
        return Ok(Box::new(NGramModel::load(Path::new(path))?));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(Box::new(RemoteScorer::new(spec)));
    }
    if let Some(rest) = spec.strip_prefix("http:") {
        return Ok(Box::new(RemoteScorer::new(format!("http://{rest}"))));
    }
    bail!("scorer must be ngram:<path> or an http(s) URL, got {spec:?}")
}

pub fn evaluate_cmd(_ctx: &Ctx, args: EvaluateArgs) -> Result<()> {
    let examples = load_examples(&args.examples)?;
    let records: Vec<GenerationRecord> = read_jsonl(&args.generations)?;
    let scorer = make_scorer(&args.scorer)?;
    let dataset_name = args.dataset_name.unwrap_or_else(|| {
        args.examples
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_owned())
    });
    let generator_name = {
        let names: BTreeSet<&str> = records.iter().map(|r| r.generator_name.as_str()).collect();
        match names.len() {
            0 => "none".to_owned(),
            1 => names.into_iter().next().unwrap().to_owned(),
            _ => "mixed".to_owned(),
        }
    };
    let report = evaluate(
        &dataset_name,
        &generator_name,
        &examples,
        &records,
        scorer.as_ref(),
    )?;
    std::fs::write(&args.report, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", args.report.display()))?;
    if let Some(histogram_path) = &args.histogram {
        let histogram = fitb_core::eval::length_histogram(&records, &examples, None)?;
        write_histogram_csv(histogram_path, &histogram)?;
    }
    println!("dataset: {}", report.dataset_name);
    println!("generator: {}", report.generator_name);
    println!(
        "n_examples: {} (skipped {})",
        report.n_examples, report.skipped
    );
    println!("fluency_ppl: {:.4}", report.fluency_ppl);
    println!(
        "fluency_ppl_groundtruth: {:.4}",
        report.fluency_ppl_groundtruth
    );
    println!("length_accuracy: {:.4}", report.length_accuracy);
    match report.goal_accuracy {
        Some(acc) => println!("goal_accuracy: {acc:.4}"),
        None => println!("goal_accuracy: n/a"),
    }
    Ok(())
}

// --- lm ---------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct LmTrainArgs {
    #[arg(long = "in", num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub min_count: Option<u64>,
    /// Interpolation weights, highest order first, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
}

pub fn lm_train(ctx: &Ctx, args: LmTrainArgs) -> Result<()> {
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        order: resolve(args.order, ctx.file.lm.order, defaults.order),
        alpha: resolve(args.alpha, ctx.file.lm.alpha, defaults.alpha),
        min_count: resolve(args.min_count, ctx.file.lm.min_count, defaults.min_count),
        lambdas: args.lambdas.or_else(|| ctx.file.lm.lambdas.clone()),
    };
    let docs = read_documents_raw(&args.input, ctx.workers)?;
    let model = train(&docs, &cfg, ctx.workers)?;
    model.save(&args.out)?;
    println!(
        "trained order-{} model on {} documents (vocab {}) -> {}",
        model.order(),
        docs.len(),
        model.vocab_size(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct LmScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Texts to score: JSONL with a "text" field (optional "id").
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Optional per-text results JSONL.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct TextRow {
    #[serde(default)]
    id: Option<String>,
    text: String,
}

#[derive(Serialize)]
struct TextScore {
    id: Option<String>,
    total_nll: f64,
    token_count: usize,
    perplexity: f64,
}

pub fn lm_score(_ctx: &Ctx, args: LmScoreArgs) -> Result<()> {
    let model = NGramModel::load(&args.model)?;
    let rows: Vec<TextRow> = read_jsonl(&args.input)?;
    if rows.is_empty() {
        bail!("no texts to score in {}", args.input.display());
    }
    let results: Vec<_> = rows.iter().map(|r| model.score(&r.text)).collect();
    let texts: Vec<String> = rows.iter().map(|r| r.text.clone()).collect();
    let corpus = model.corpus_perplexity(&texts)?;
    let mean = model.mean_example_perplexity(&texts)?;
    if let Some(out) = &args.out {
        let scores: Vec<TextScore> = rows
            .iter()
            .zip(&results)
            .map(|(row, result)| TextScore {
                id: row.id.clone(),
                total_nll: result.total_nll,
                token_count: result.token_count,
                perplexity: result.perplexity(),
            })
            .collect();
        write_jsonl(out, &scores)?;
    }
    let summary = serde_json::json!({
        "n_texts": rows.len(),
        "total_tokens": results.iter().map(|r| r.token_count).sum::<usize>(),
        "corpus_perplexity": corpus,
        "mean_example_perplexity": mean,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
