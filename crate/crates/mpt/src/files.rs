//! On-disk records: split files, template files, checkpoints, pseudo-label
//! snapshots, metrics tables and content digests.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use mpt_core::data::{class_counts, Dataset, UnlabeledPool};
use mpt_core::evaluation::EvalReport;
use mpt_core::prompting::tasks::TaskPreset;
use mpt_core::pseudolabel::ScoredPseudoExample;
use mpt_core::sampling::{SampleMode, Split};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.into(), line: e.line(), reason: e.to_string() })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable record");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDigest {
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_counts: Option<Vec<usize>>,
    pub sha256: String,
}

pub fn digest_dataset(d: &Dataset) -> DatasetDigest {
    DatasetDigest {
        size: d.len(),
        class_counts: Some(class_counts(d).as_slice().to_vec()),
        sha256: sha256_hex(&serde_json::to_vec(&d.examples).expect("serializable dataset")),
    }
}

pub fn digest_pool(p: &UnlabeledPool) -> DatasetDigest {
    DatasetDigest {
        size: p.len(),
        class_counts: None,
        sha256: sha256_hex(&serde_json::to_vec(&p.instances).expect("serializable pool")),
    }
}

/// A sampled split as explicit id lists, reloadable without resampling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub mode: SampleMode,
    pub k: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
    pub source_sha256: String,
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SplitRecord {
    pub fn new(mode: SampleMode, k: usize, seed: u64, total: Option<usize>, source: &Dataset, split: &Split) -> Self {
        Self {
            mode,
            k,
            seed,
            total,
            source_sha256: digest_dataset(source).sha256,
            train_ids: split.train.ids().map(String::from).collect(),
            validation_ids: split.validation.ids().map(String::from).collect(),
            warnings: split.warnings.clone(),
        }
    }

    /// Rebuilds the split from `source`; examples keep source order.
    pub fn resolve(&self, source: &Dataset) -> Result<Split> {
        let pick = |ids: &[String]| -> Result<Dataset> {
            let index: BTreeMap<&str, usize> = source.ids().enumerate().map(|(i, id)| (id, i)).collect();
            let mut positions = Vec::with_capacity(ids.len());
            for id in ids {
                let i = index
                    .get(id.as_str())
                    .ok_or_else(|| Error::config(format!("split id `{id}` is not in the source dataset")))?;
                positions.push(*i);
            }
            positions.sort_unstable();
            Ok(Dataset::new(source.space.clone(), positions.into_iter().map(|i| source.examples[i].clone()).collect()))
        };
        Ok(Split {
            train: pick(&self.train_ids)?,
            validation: pick(&self.validation_ids)?,
            warnings: self.warnings.clone(),
        })
    }
}

/// A task definition file: label space, verbalizer and templates.
pub fn load_task_file(path: &Path) -> Result<TaskPreset> {
    read_json(path)
}

pub fn save_task_file(path: &Path, preset: &TaskPreset) -> Result<()> {
    write_json(path, preset)
}

/// Metadata stored next to a prompt model's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub template_id: String,
    pub generation: usize,
    pub weight: f64,
    pub seed: u64,
    pub config_sha256: String,
    pub fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMeta {
    pub labels: Vec<String>,
    pub seed: u64,
    pub config_sha256: String,
    pub fingerprint: u64,
}

pub const STATE_FILE: &str = "state.json";
pub const META_FILE: &str = "meta.json";

pub fn write_checkpoint<S: Serialize, M: Serialize>(dir: &Path, state: &S, meta: &M) -> Result<()> {
    write_json(&dir.join(STATE_FILE), state)?;
    write_json(&dir.join(META_FILE), meta)
}

pub fn read_checkpoint<S: DeserializeOwned, M: DeserializeOwned>(dir: &Path) -> Result<(S, M)> {
    Ok((read_json(&dir.join(STATE_FILE))?, read_json(&dir.join(META_FILE))?))
}

/// One JSON record per selected entry.
pub fn write_snapshot(path: &Path, entries: &[ScoredPseudoExample]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e).expect("serializable entry");
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Vec<ScoredPseudoExample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// One metrics-table row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run: String,
    pub method: String,
    pub split: String,
    pub seed: u64,
    pub k: usize,
    pub report: EvalReport,
}

/// Writes rows as CSV with one `f1:<label>` column per class. All rows
/// must share a label space.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut buf = Vec::new();
    write_metrics(&mut buf, rows)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_metrics(out: &mut impl Write, rows: &[MetricsRow]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::config(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let labels: Vec<String> =
        rows.first().map(|r| r.report.per_class.iter().map(|c| c.label.name.clone()).collect()).unwrap_or_default();
    let mut header: Vec<String> =
        ["run", "method", "split", "seed", "k", "n", "accuracy", "macro_f1"].iter().map(|s| s.to_string()).collect();
    header.extend(labels.iter().map(|l| format!("f1:{l}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.run.clone(),
            r.method.clone(),
            r.split.clone(),
            r.seed.to_string(),
            r.k.to_string(),
            r.report.n.to_string(),
            format!("{:.6}", r.report.accuracy),
            format!("{:.6}", r.report.macro_f1),
        ];
        rec.extend(r.report.per_class.iter().map(|c| format!("{:.6}", c.f1)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<metrics>", e))
}

/// Path of `child` relative to `base`, with `/` separators.
pub fn relative(base: &Path, child: &Path) -> String {
    let rel: PathBuf = child.strip_prefix(base).unwrap_or(child).to_path_buf();
    rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/")
}
