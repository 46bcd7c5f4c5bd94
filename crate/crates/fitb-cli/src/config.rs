//! Config file loading and flag/file/default precedence.
//!
//! Flags win over the config file, which wins over built-in defaults. The
//! defaults are the production values: 256..512-word truncation windows,
//! 64-word minimum keep, 0.5 mixture fractions, 100/300/212 prompt budgets,
//! and an order-3 scorer.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub truncate: TruncateSection,
    #[serde(default)]
    pub build: BuildSection,
    #[serde(default)]
    pub prompt: PromptSection,
    #[serde(default)]
    pub lm: LmSection,
    #[serde(default)]
    pub generate: GenerateSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncateSection {
    pub min_words: Option<usize>,
    pub max_words: Option<usize>,
    pub min_keep: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildSection {
    pub setting: Option<String>,
    pub goal_fraction: Option<f64>,
    pub cap: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSection {
    pub k: Option<usize>,
    pub per_shot: Option<usize>,
    pub budget: Option<usize>,
    pub query_reserve: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmSection {
    pub order: Option<usize>,
    pub alpha: Option<f64>,
    pub min_count: Option<u64>,
    pub lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub candidates: Option<usize>,
}

impl FileConfig {
    /// Load TOML (default) or JSON (by `.json` extension).
    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&content)
                .with_context(|| format!("parsing JSON config {}", path.display()))
        } else {
            toml::from_str(&content)
                .with_context(|| format!("parsing TOML config {}", path.display()))
        }
    }
}

/// flag > config file > default
pub fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
