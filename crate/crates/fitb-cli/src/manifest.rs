//! Run manifests: enough provenance to reproduce an output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: String,
    pub seed: u64,
    pub config_hash: String,
    pub input_file_hashes: BTreeMap<String, String>,
    pub tool_version: String,
    pub timestamp: String,
    pub dataset: DatasetSection,
}

#[derive(Debug, Serialize)]
pub struct DatasetSection {
    pub mode: String,
    pub setting: Option<String>,
    pub placement: Option<String>,
    pub goal_fraction: Option<f64>,
    pub cap: Option<usize>,
    pub examples: u64,
    pub skipped_short: u64,
    pub clamped: u64,
    /// The reference finetuning recipe for models trained on this data,
    /// recorded as documentation.
    pub reference_finetune_recipe: FinetuneRecipe,
}

#[derive(Debug, Serialize)]
pub struct FinetuneRecipe {
    pub steps: u64,
    pub batch_size: u64,
    pub learning_rate: f64,
}

impl Default for FinetuneRecipe {
    fn default() -> Self {
        Self {
            steps: 50_000,
            batch_size: 128,
            learning_rate: 0.0008,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing input {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn hash_files(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), hash_file(p)?)))
        .collect()
}

/// Hash of the resolved effective configuration, serialized as JSON.
pub fn config_hash<T: Serialize>(resolved: &T) -> String {
    sha256_hex(
        serde_json::to_string(resolved)
            .expect("serializable config")
            .as_bytes(),
    )
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).expect("serializable manifest");
    std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))
}
