//! Executing configured runs and persisting their artifacts.
//!
//! A run directory holds:
//!
//! ```text
//! manifest.json
//! config.toml                     resolved configuration for this seed
//! split.json                      labeled/validation ids
//! models/g<j>/<template>/         state.json + meta.json per prompt model
//! snapshots/g<j>/<template>.jsonl selected pseudo-labeled entries (j >= 1)
//! classifier/                     state.json + meta.json
//! metrics.csv
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use mpt_core::backend::{Backend, MockBackend};
use mpt_core::data::{Dataset, Instance, UnlabeledPool};
use mpt_core::hash::mix;
use mpt_core::prompting::tasks::TaskPreset;
use mpt_core::sampling::{sample_pool, SamplePlan, Split};
use mpt_core::scheduler::{self, RunTrace, TemplateRecord};
use mpt_core::synthetic::SyntheticTask;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::files::{
    digest_dataset, digest_pool, read_json, relative, sha256_hex, write_checkpoint, write_json, write_metrics_csv,
    write_snapshot, ClassifierMeta, MetricsRow, ModelMeta, SplitRecord,
};
use crate::ingestion::{load_labeled, load_unlabeled};
use crate::manifest::{
    config_sha256, DatasetDigests, GenerationEntry, RunManifest, RunMetrics, RunStatus, TemplateEntry, WallClock,
    FORMAT_VERSION, MANIFEST_FILE,
};

/// Environment variable naming the directory runs are written under.
pub const RUN_ROOT_ENV: &str = "MPT_RUN_ROOT";
pub const DEFAULT_RUN_ROOT: &str = "runs";

const SYNTHETIC_SOURCE_SEED: u64 = 0x5eed;
const SYNTHETIC_SOURCE_SIZE: usize = 3000;
const POOL_TAG: u64 = 0x9001;

/// Data for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub split: Split,
    pub record: SplitRecord,
    pub pool: UnlabeledPool,
    pub test: Dataset,
}

fn plan(cfg: &RunConfig, seed: u64) -> SamplePlan {
    SamplePlan { mode: cfg.mode, k: cfg.k, seed, total: cfg.total, strict: false }
}

/// Loads or generates the labeled split, pool and test set for `seed`.
pub fn prepare(cfg: &RunConfig, preset: &TaskPreset, seed: u64) -> Result<Prepared> {
    let plan = plan(cfg, seed);
    let train_total = cfg.total.unwrap_or(cfg.k * preset.space.len());
    let (source, test, external_pool, saved_split) = match &cfg.data {
        None => {
            let task = SyntheticTask::default();
            let size = SYNTHETIC_SOURCE_SIZE.max(2 * train_total + cfg.unlabeled_count);
            let source = task.generate(size, "train", SYNTHETIC_SOURCE_SEED);
            let test = task.generate(cfg.synthetic_test, "test", SYNTHETIC_SOURCE_SEED + 1);
            (source, test, None, None)
        }
        Some(d) => {
            let adapter = d.adapter();
            let source = load_labeled(&d.train, &adapter, &preset.space)?;
            let test = load_labeled(&d.test, &adapter, &preset.space)?;
            let pool = d.pool.as_ref().map(|p| load_unlabeled(p, &adapter)).transpose()?;
            let split = d.split.as_ref().map(|p| read_json::<SplitRecord>(p)).transpose()?;
            (source, test, pool, split)
        }
    };
    let (split, record) = match saved_split {
        Some(rec) => (rec.resolve(&source)?, rec),
        None => {
            let split = plan.apply(&source)?;
            let rec = SplitRecord::new(plan.mode, plan.k, seed, plan.total, &source, &split);
            (split, rec)
        }
    };
    let exclude: BTreeSet<String> = split.train.ids().chain(split.validation.ids()).map(String::from).collect();
    let candidates: Vec<Instance> = match external_pool {
        Some(p) => p.instances,
        None => source.instances().cloned().collect(),
    };
    let test_ids: BTreeSet<&str> = test.ids().collect();
    let candidates: Vec<Instance> = candidates.into_iter().filter(|x| !test_ids.contains(x.id.as_str())).collect();
    let pool = sample_pool(&candidates, cfg.unlabeled_count, &exclude, mix(&[seed, POOL_TAG]))?;
    Ok(Prepared { split, record, pool, test })
}

pub fn run_dir_name(cfg: &RunConfig, seed: u64) -> String {
    format!("{}-{}-k{}-seed{seed}", cfg.name, cfg.task, cfg.k)
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn ids_sha256(ids: &[String]) -> String {
    sha256_hex(ids.join("\n").as_bytes())
}

fn safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn generation_entries(dir: &Path, trace: &RunTrace, with_checkpoints: bool) -> Result<Vec<GenerationEntry>> {
    let mut out = Vec::new();
    for g in &trace.generations {
        let mut templates = Vec::new();
        for t in &g.templates {
            let snapshot = if g.generation > 0 {
                let p = dir
                    .join("snapshots")
                    .join(format!("g{}", g.generation))
                    .join(format!("{}.jsonl", safe(&t.template_id)));
                write_snapshot(&p, &t.selected)?;
                Some(relative(dir, &p))
            } else {
                None
            };
            let checkpoint = with_checkpoints.then(|| relative(dir, &checkpoint_dir(dir, t)));
            templates.push(TemplateEntry {
                template_id: t.template_id.clone(),
                weight: t.weight,
                labelers: t.labelers.clone(),
                training_size: t.training_size,
                class_counts: t.class_counts.clone(),
                training_ids_sha256: ids_sha256(&t.training_ids),
                selected: t.selected.len(),
                overrides: t.selected.iter().filter(|e| e.override_label.is_some()).count(),
                duplicates: t.selected.iter().filter(|e| e.duplicate).count(),
                snapshot,
                checkpoint,
                fingerprint: t.fingerprint,
            });
        }
        out.push(GenerationEntry { generation: g.generation, templates });
    }
    Ok(out)
}

fn checkpoint_dir(dir: &Path, t: &TemplateRecord) -> PathBuf {
    dir.join("models").join(format!("g{}", t.generation)).join(safe(&t.template_id))
}

/// Result of one seed's run.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

/// Runs one seed into `run_root/<run_dir_name>` with the configured
/// backend. On failure a manifest with status `failed` is still written.
pub fn execute_seed(cfg: &RunConfig, seed: u64, run_root: &Path, overwrite: bool) -> Result<SeedOutcome> {
    match cfg.backend.as_str() {
        "mock" => execute_with(Arc::new(MockBackend::new()), cfg, seed, run_root, overwrite),
        other => Err(Error::config(format!("unknown backend `{other}`"))),
    }
}

pub fn execute_with<B>(
    backend: Arc<B>,
    cfg: &RunConfig,
    seed: u64,
    run_root: &Path,
    overwrite: bool,
) -> Result<SeedOutcome>
where
    B: Backend,
    B::PromptState: Serialize,
    B::ClassifierState: Serialize,
{
    cfg.validate()?;
    let started = Instant::now();
    let started_unix = unix_now();
    let cfg = cfg.for_seed(seed);
    let preset = cfg.preset()?;
    let dir = run_root.join(run_dir_name(&cfg, seed));
    if dir.join(MANIFEST_FILE).exists() && !overwrite {
        return Err(Error::config(format!(
            "{} already holds a run; choose another run root or pass --overwrite",
            dir.display()
        )));
    }
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let config_path = dir.join("config.toml");
    fs::write(&config_path, cfg.to_toml()).map_err(|e| Error::io(&config_path, e))?;

    let config_sha = config_sha256(&cfg);
    let mut manifest = RunManifest {
        format_version: FORMAT_VERSION,
        status: RunStatus::Completed,
        config: cfg.clone(),
        config_sha256: config_sha.clone(),
        seed,
        config_file: relative(&dir, &config_path),
        split_record: None,
        datasets: None,
        generations: Vec::new(),
        warnings: Vec::new(),
        distillation_rows: None,
        classifier: None,
        classifier_fingerprint: None,
        metrics: None,
        metrics_csv: None,
        wall_clock: None,
        hash: String::new(),
    };
    let finish = |mut m: RunManifest| -> Result<RunManifest> {
        m.wall_clock =
            Some(WallClock { started_unix, finished_unix: unix_now(), seconds: started.elapsed().as_secs_f64() });
        m.seal();
        m.save(&dir)?;
        Ok(m)
    };
    let fail = |mut m: RunManifest, e: Error| -> Error {
        m.status = RunStatus::Failed { error: e.to_string(), exit_code: e.exit_code() };
        match finish(m) {
            Ok(_) => e,
            Err(write_err) => write_err,
        }
    };

    let data = match prepare(&cfg, &preset, seed) {
        Ok(d) => d,
        Err(e) => return Err(fail(manifest, e)),
    };
    let split_path = dir.join("split.json");
    write_json(&split_path, &data.record)?;
    manifest.split_record = Some(relative(&dir, &split_path));
    manifest.datasets = Some(DatasetDigests {
        labeled: digest_dataset(&data.split.train),
        validation: digest_dataset(&data.split.validation),
        pool: digest_pool(&data.pool),
        test: digest_dataset(&data.test),
    });
    manifest.warnings.extend(data.split.warnings.iter().cloned());

    let core = cfg.core_config(&preset, seed);
    let result = match scheduler::run(Arc::clone(&backend), &core, &data.split.train, &data.pool, &data.test) {
        Ok(r) => r,
        Err(failure) => {
            manifest.warnings.extend(failure.trace.warnings.iter().cloned());
            manifest.generations = generation_entries(&dir, &failure.trace, false)?;
            return Err(fail(manifest, Error::Core(failure.error)));
        }
    };

    for (models, generation) in result.generations.iter().zip(&result.trace.generations) {
        for (m, record) in models.iter().zip(&generation.templates) {
            let meta = ModelMeta {
                template_id: m.template_id().into(),
                generation: m.generation(),
                weight: m.weight(),
                seed,
                config_sha256: config_sha.clone(),
                fingerprint: m.fingerprint(),
            };
            write_checkpoint(&checkpoint_dir(&dir, record), m.state(), &meta)?;
        }
    }
    let classifier_dir = dir.join("classifier");
    write_checkpoint(
        &classifier_dir,
        result.classifier.state(),
        &ClassifierMeta {
            labels: preset.space.names().map(String::from).collect(),
            seed,
            config_sha256: config_sha.clone(),
            fingerprint: result.classifier.fingerprint(),
        },
    )?;

    let run_name = run_dir_name(&cfg, seed);
    let mut rows = vec![
        MetricsRow {
            run: run_name.clone(),
            method: cfg.name.clone(),
            split: "test".into(),
            seed,
            k: cfg.k,
            report: result.metrics.clone(),
        },
        MetricsRow {
            run: run_name.clone(),
            method: format!("{}:ensemble", cfg.name),
            split: "test".into(),
            seed,
            k: cfg.k,
            report: result.ensemble_metrics.clone(),
        },
    ];
    rows.extend(result.baselines.iter().map(|b| MetricsRow {
        run: run_name.clone(),
        method: format!("prompt:{}", b.template_id),
        split: "test".into(),
        seed,
        k: cfg.k,
        report: b.metrics.clone(),
    }));
    let metrics_path = dir.join("metrics.csv");
    write_metrics_csv(&metrics_path, &rows)?;

    manifest.warnings.extend(result.trace.warnings.iter().cloned());
    manifest.generations = generation_entries(&dir, &result.trace, true)?;
    manifest.distillation_rows = result.trace.distillation_rows;
    manifest.classifier = Some(relative(&dir, &classifier_dir));
    manifest.classifier_fingerprint = Some(result.classifier.fingerprint());
    manifest.metrics = Some(RunMetrics {
        classifier: result.metrics.clone(),
        ensemble: result.ensemble_metrics.clone(),
        baselines: result.baselines.clone(),
    });
    manifest.metrics_csv = Some(relative(&dir, &metrics_path));
    let manifest = finish(manifest)?;
    Ok(SeedOutcome { dir, manifest })
}

/// Runs every configured seed and writes an aggregate metrics table with
/// one row per seed. Stops at the first failing seed.
pub fn execute_all(cfg: &RunConfig, run_root: &Path, overwrite: bool) -> Result<(Vec<SeedOutcome>, PathBuf)> {
    cfg.validate()?;
    let mut outcomes = Vec::new();
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let o = execute_seed(cfg, seed, run_root, overwrite)?;
        if let Some(m) = &o.manifest.metrics {
            rows.push(MetricsRow {
                run: run_dir_name(cfg, seed),
                method: cfg.name.clone(),
                split: "test".into(),
                seed,
                k: cfg.k,
                report: m.classifier.clone(),
            });
        }
        outcomes.push(o);
    }
    let aggregate = run_root.join(format!("{}-{}-k{}-metrics.csv", cfg.name, cfg.task, cfg.k));
    write_metrics_csv(&aggregate, &rows)?;
    Ok((outcomes, aggregate))
}
