//! Run configuration: one TOML file per run, overridable from the command
//! line. The resolved form is embedded in every manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mpt_core::backend::TrainingConfig;
use mpt_core::prompting::tasks::{self, TaskPreset};
use mpt_core::prompting::TemplateKind;
use mpt_core::sampling::SampleMode;
use mpt_core::scheduler::{MptConfig, WeightMode};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::load_task_file;
use crate::ingestion::{AdapterConfig, FieldMap, Format};

pub const BACKENDS: [&str; 1] = ["mock"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateSelection {
    #[default]
    All,
    HardOnly,
    SoftOnly,
}

impl TemplateSelection {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(Self::All),
            "hard-only" => Some(Self::HardOnly),
            "soft-only" => Some(Self::SoftOnly),
            _ => None,
        }
    }

    fn keeps(self, kind: TemplateKind) -> bool {
        match self {
            Self::All => true,
            Self::HardOnly => kind == TemplateKind::Hard,
            Self::SoftOnly => kind == TemplateKind::Soft,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    /// Falls back to the task's default length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_length: Option<usize>,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            learning_rate: defaults::learning_rate(),
            batch_size: defaults::batch_size(),
            epochs: defaults::epochs(),
            max_length: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub format: Format,
    /// Labeled source the few-shot split is drawn from.
    pub train: PathBuf,
    pub test: PathBuf,
    /// External unlabeled file; the pool comes from the training remainder
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PathBuf>,
    /// Saved split to reuse instead of sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<FieldMap>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

impl DataConfig {
    pub fn adapter(&self) -> AdapterConfig {
        let mut a = AdapterConfig::for_format(self.format);
        if let Some(f) = &self.fields {
            a.fields = f.clone();
        }
        a.labels = self.labels.clone();
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Method name used to group runs in reports.
    #[serde(default = "defaults::name")]
    pub name: String,
    #[serde(default = "defaults::task")]
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_file: Option<PathBuf>,
    #[serde(default = "defaults::backend")]
    pub backend: String,
    #[serde(default)]
    pub templates: TemplateSelection,
    #[serde(default = "defaults::mode")]
    pub mode: SampleMode,
    #[serde(default = "defaults::k")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
    #[serde(default = "defaults::seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "defaults::unlabeled_count")]
    pub unlabeled_count: usize,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::growth")]
    pub growth: u64,
    #[serde(default = "defaults::generations")]
    pub generations: usize,
    #[serde(default)]
    pub weight_mode: WeightMode,
    #[serde(default = "defaults::temperature")]
    pub temperature: f64,
    /// Test-set size for the synthetic task.
    #[serde(default = "defaults::synthetic_test")]
    pub synthetic_test: usize,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
}

mod defaults {
    use super::*;

    pub fn name() -> String {
        "mpt".into()
    }
    pub fn task() -> String {
        "synthetic".into()
    }
    pub fn backend() -> String {
        "mock".into()
    }
    pub fn mode() -> SampleMode {
        SampleMode::Balanced
    }
    pub fn k() -> usize {
        16
    }
    pub fn seeds() -> Vec<u64> {
        vec![1, 2, 3]
    }
    pub fn unlabeled_count() -> usize {
        600
    }
    pub fn lambda() -> f64 {
        MptConfig::DEFAULT_LAMBDA
    }
    pub fn growth() -> u64 {
        MptConfig::DEFAULT_GROWTH
    }
    pub fn generations() -> usize {
        MptConfig::DEFAULT_GENERATIONS
    }
    pub fn temperature() -> f64 {
        1.0
    }
    pub fn synthetic_test() -> usize {
        600
    }
    pub fn learning_rate() -> f64 {
        TrainingConfig::default().learning_rate
    }
    pub fn batch_size() -> usize {
        TrainingConfig::default().batch_size
    }
    pub fn epochs() -> usize {
        TrainingConfig::default().epochs
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(p) => Error::Config(p.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("serializable config")
    }

    /// The task definition: a task file if given, else a bundled preset.
    pub fn preset(&self) -> Result<TaskPreset> {
        match &self.task_file {
            Some(p) => load_task_file(p),
            None => tasks::by_name(&self.task).ok_or_else(|| {
                Error::config(format!(
                    "unknown task `{}`; use scicite, rct, keyword, synthetic or set task_file",
                    self.task
                ))
            }),
        }
    }

    /// Every problem with the configuration that can be found without
    /// loading data.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push("name must be non-empty".into());
        }
        if !BACKENDS.contains(&self.backend.as_str()) {
            out.push(format!("unknown backend `{}`; available: {}", self.backend, BACKENDS.join(", ")));
        }
        if self.k == 0 {
            out.push("k must be at least 1".into());
        }
        if self.seeds.is_empty() {
            out.push("at least one seed is required".into());
        }
        if self.unlabeled_count == 0 {
            out.push("unlabeled_count must be at least 1".into());
        }
        if self.task != "synthetic" || self.task_file.is_some() {
            match &self.data {
                None => out.push(format!("task `{}` needs a [data] section", self.task)),
                Some(d) => {
                    out.extend(d.adapter().problems());
                    for (what, p) in [
                        ("train", Some(&d.train)),
                        ("test", Some(&d.test)),
                        ("pool", d.pool.as_ref()),
                        ("split", d.split.as_ref()),
                    ] {
                        if let Some(p) = p {
                            if !p.exists() {
                                out.push(format!("data.{what}: {} does not exist", p.display()));
                            }
                        }
                    }
                }
            }
        }
        match self.preset() {
            Err(Error::Config(p)) => out.extend(p),
            Err(e) => out.push(e.to_string()),
            Ok(preset) => {
                let core = self.core_config(&preset, self.seeds.first().copied().unwrap_or(1));
                out.extend(core.problems().into_iter().map(|p| {
                    if p.starts_with("at least 2 templates") {
                        format!("{p} (selection `{}`)", serde_plain(&self.templates))
                    } else {
                        p
                    }
                }));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn max_length(&self, preset: &TaskPreset) -> usize {
        self.training.max_length.unwrap_or(preset.max_length)
    }

    /// Core configuration for one seed.
    pub fn core_config(&self, preset: &TaskPreset, seed: u64) -> MptConfig {
        let templates = preset.templates.iter().filter(|t| self.templates.keeps(t.kind())).cloned().collect();
        let mut cfg = MptConfig::new(templates, preset.verbalizer.clone());
        cfg.lambda = self.lambda;
        cfg.growth = self.growth;
        cfg.generations = self.generations;
        cfg.weight_mode = self.weight_mode;
        cfg.temperature = self.temperature;
        cfg.seed = seed;
        cfg.training = TrainingConfig {
            learning_rate: self.training.learning_rate,
            batch_size: self.training.batch_size,
            epochs: self.training.epochs,
            max_length: self.max_length(preset),
            seed,
        };
        cfg
    }

    /// This configuration restricted to one seed, as stored in a manifest.
    pub fn for_seed(&self, seed: u64) -> Self {
        Self { seeds: vec![seed], ..self.clone() }
    }
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub name: Option<String>,
    pub task: Option<String>,
    pub backend: Option<String>,
    pub templates: Option<TemplateSelection>,
    pub mode: Option<SampleMode>,
    pub k: Option<usize>,
    pub total: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub unlabeled_count: Option<usize>,
    pub lambda: Option<f64>,
    pub growth: Option<u64>,
    pub generations: Option<usize>,
    pub weight_mode: Option<WeightMode>,
    pub epochs: Option<usize>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &o.$f { self.$f = v.clone(); })*};
        }
        set!(name, task, backend, templates, mode, k, seeds, unlabeled_count, lambda, growth, generations, weight_mode);
        if o.total.is_some() {
            self.total = o.total;
        }
        if let Some(e) = o.epochs {
            self.training.epochs = e;
        }
    }
}
