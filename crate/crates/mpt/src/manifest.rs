//! Run manifests. The hash covers every field except the hash itself and the
//! wall-clock record, so identical runs hash identically.

use std::path::Path;

use mpt_core::data::ClassCounts;
use mpt_core::evaluation::EvalReport;
use mpt_core::scheduler::BaselineMetrics;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::files::{read_json, sha256_hex, write_json, DatasetDigest};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { error: String, exit_code: i32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDigests {
    pub labeled: DatasetDigest,
    pub validation: DatasetDigest,
    pub pool: DatasetDigest,
    pub test: DatasetDigest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateEntry {
    pub template_id: String,
    pub weight: f64,
    /// Previous-generation templates whose ensemble labeled this model's
    /// training data.
    pub labelers: Vec<String>,
    pub training_size: usize,
    pub class_counts: ClassCounts,
    pub training_ids_sha256: String,
    pub selected: usize,
    pub overrides: usize,
    pub duplicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    pub fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationEntry {
    pub generation: usize,
    pub templates: Vec<TemplateEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub classifier: EvalReport,
    pub ensemble: EvalReport,
    pub baselines: Vec<BaselineMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub started_unix: u64,
    pub finished_unix: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub status: RunStatus,
    pub config: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    /// Resolved configuration file, relative to the run directory.
    pub config_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_record: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datasets: Option<DatasetDigests>,
    pub generations: Vec<GenerationEntry>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distillation_rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier_fingerprint: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RunMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<WallClock>,
    #[serde(default)]
    pub hash: String,
}

pub fn config_sha256(cfg: &RunConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("serializable config"))
}

impl RunManifest {
    pub fn compute_hash(&self) -> String {
        let mut bare = self.clone();
        bare.hash.clear();
        bare.wall_clock = None;
        sha256_hex(&serde_json::to_vec(&bare).expect("serializable manifest"))
    }

    pub fn seal(&mut self) {
        self.hash = self.compute_hash();
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    /// Reads and verifies a manifest; `path` may be the file or its run
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let m: RunManifest = read_json(&file).map_err(|e| match e {
            Error::Parse { reason, .. } => Error::Manifest { path: file.clone(), reason },
            other => other,
        })?;
        if m.hash != m.compute_hash() {
            return Err(Error::Manifest { path: file, reason: "hash does not match contents".into() });
        }
        Ok(m)
    }

    pub fn best_baseline(&self) -> Option<&BaselineMetrics> {
        self.metrics.as_ref()?.baselines.iter().max_by(|a, b| a.metrics.macro_f1.total_cmp(&b.metrics.macro_f1))
    }
}
