//! The generational loop: generation 0 tunes every template on the labeled
//! set; each later generation retrains every template on the labeled set
//! plus pool entries labeled by a random subset of the other templates'
//! previous-generation models; the last generation's ensemble then labels
//! the whole pool for a standard classifier.
//!
//! All randomness is derived from `(seed, generation, template)` so results
//! do not depend on the order in which template trainings run.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{
    train_classifier, train_prompt, Backend, RowSource, SoftExample, SoftLabeledSet, StandardClassifier,
    TrainingConfig, TunedPromptModel,
};
use crate::data::{class_counts, ClassCounts, Dataset, Instance, UnlabeledPool};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_indices, AbsentClassPolicy, EvalReport};
use crate::hash::mix;
use crate::prompting::{LabelDistribution, PromptTemplate, Verbalizer, VerbalizerLayout};
use crate::pseudolabel::{
    aggregate, assemble_training_set, growth_targets, label_pool, select_per_class, GrowthSchedule, LabelScorer,
    ScoredPseudoExample,
};

const INIT_TAG: u64 = 0x1417;
const TRAIN_TAG: u64 = 0x7a17;
const SUBSET_TAG: u64 = 0x5b5e;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Every template weighs 1.
    #[default]
    Uniform,
    /// Untuned accuracy on the labeled set, at least 0.1.
    SeedAccuracy,
}

pub const MIN_SEED_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MptConfig {
    pub templates: Vec<PromptTemplate>,
    pub verbalizer: Verbalizer,
    pub lambda: f64,
    pub growth: u64,
    pub generations: usize,
    #[serde(default)]
    pub weight_mode: WeightMode,
    #[serde(default)]
    pub training: TrainingConfig,
    pub seed: u64,
    /// Distillation target temperature; 1 keeps the ensemble distribution.
    #[serde(default = "one")]
    pub temperature: f64,
}

fn one() -> f64 {
    1.0
}

impl MptConfig {
    pub const DEFAULT_LAMBDA: f64 = 0.25;
    pub const DEFAULT_GROWTH: u64 = 5;
    pub const DEFAULT_GENERATIONS: usize = 3;

    pub fn new(templates: Vec<PromptTemplate>, verbalizer: Verbalizer) -> Self {
        Self {
            templates,
            verbalizer,
            lambda: Self::DEFAULT_LAMBDA,
            growth: Self::DEFAULT_GROWTH,
            generations: Self::DEFAULT_GENERATIONS,
            weight_mode: WeightMode::Uniform,
            training: TrainingConfig::default(),
            seed: 1,
            temperature: 1.0,
        }
    }

    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.templates.len() < 2 {
            out.push(format!("at least 2 templates are required, got {}", self.templates.len()));
        }
        let mut seen = BTreeSet::new();
        for t in &self.templates {
            if !seen.insert(t.id()) {
                out.push(format!("duplicate template id `{}`", t.id()));
            }
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            out.push(format!("lambda must lie in (0, 1], got {}", self.lambda));
        }
        if self.growth == 0 {
            out.push("growth factor must be at least 1".into());
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            out.push(format!("temperature must be positive, got {}", self.temperature));
        }
        out.extend(self.training.problems());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    fn training_for(&self, generation: usize, template: usize) -> TrainingConfig {
        TrainingConfig {
            seed: mix(&[self.seed, TRAIN_TAG, generation as u64, template as u64]),
            ..self.training.clone()
        }
    }
}

/// `max(1, round_half_even(lambda * (n - 1)))`.
pub fn subset_size(lambda: f64, n_templates: usize) -> usize {
    let raw = libm::rint(lambda * n_templates.saturating_sub(1) as f64);
    (raw.max(0.0) as usize).clamp(1, n_templates.saturating_sub(1).max(1))
}

/// Indices of the models that label template `exclude`'s next training set,
/// ascending.
pub fn sample_subset(n_models: usize, exclude: usize, lambda: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut others: Vec<usize> = (0..n_models).filter(|&m| m != exclude).collect();
    let m = subset_size(lambda, n_models).min(others.len());
    let (picked, _) = others.partial_shuffle(rng, m);
    let mut picked = picked.to_vec();
    picked.sort_unstable();
    picked
}

/// The generator behind template `i`'s subset at generation `j`.
pub fn subset_rng(seed: u64, generation: usize, template: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(&[seed, SUBSET_TAG, generation as u64, template as u64]))
}

/// What one template's model at one generation was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub template_id: String,
    pub generation: usize,
    pub weight: f64,
    /// Ids of the previous-generation templates that labeled its data.
    pub labelers: Vec<String>,
    pub training_size: usize,
    pub class_counts: ClassCounts,
    /// Training instance ids in training order (duplicates repeat).
    pub training_ids: Vec<String>,
    /// Selected pseudo-labeled entries.
    pub selected: Vec<ScoredPseudoExample>,
    pub fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub templates: Vec<TemplateRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub generations: Vec<GenerationRecord>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distillation_rows: Option<usize>,
}

fn record<B: Backend>(
    model: &TunedPromptModel<B>,
    labelers: Vec<String>,
    train: &Dataset,
    selected: Vec<ScoredPseudoExample>,
) -> TemplateRecord {
    TemplateRecord {
        template_id: model.template_id().into(),
        generation: model.generation(),
        weight: model.weight(),
        labelers,
        training_size: train.len(),
        class_counts: class_counts(train),
        training_ids: train.ids().map(String::from).collect(),
        selected,
        fingerprint: model.fingerprint(),
    }
}

fn layout_for<B: Backend>(backend: &B, cfg: &MptConfig) -> Result<Arc<VerbalizerLayout>> {
    VerbalizerLayout::compile(&cfg.verbalizer, backend.probe()).map(Arc::new)
}

/// One model per template, tuned on `labeled`.
pub fn train_generation_zero<B: Backend>(
    backend: &Arc<B>,
    cfg: &MptConfig,
    labeled: &Dataset,
) -> Result<(Vec<TunedPromptModel<B>>, GenerationRecord)> {
    if labeled.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let layout = layout_for(backend.as_ref(), cfg)?;
    let mut models = Vec::with_capacity(cfg.templates.len());
    let mut records = Vec::with_capacity(cfg.templates.len());
    for (i, template) in cfg.templates.iter().enumerate() {
        let untrained = TunedPromptModel::new(
            Arc::clone(backend),
            template.clone(),
            Arc::clone(&layout),
            mix(&[cfg.seed, INIT_TAG, i as u64]),
            cfg.training.max_length,
        );
        let weight = match cfg.weight_mode {
            WeightMode::Uniform => 1.0,
            WeightMode::SeedAccuracy => untrained.accuracy(labeled)?.max(MIN_SEED_WEIGHT),
        };
        let model = train_prompt(&untrained, labeled, &cfg.training_for(0, i))?.with_weight(weight)?;
        records.push(record(&model, Vec::new(), labeled, Vec::new()));
        models.push(model);
    }
    Ok((models, GenerationRecord { generation: 0, templates: records }))
}

/// Pool distributions of one model, computed once per generation.
struct Cached<'a>(&'a BTreeMap<String, LabelDistribution>);

impl LabelScorer for Cached<'_> {
    fn label_distribution(&self, instance: &Instance) -> Result<LabelDistribution> {
        self.0
            .get(&instance.id)
            .cloned()
            .ok_or_else(|| Error::InvalidConfig(alloc::vec![format!("`{}` was not scored", instance.id)]))
    }
}

fn score_pool<B: Backend>(
    models: &[TunedPromptModel<B>],
    pool: &UnlabeledPool,
) -> Result<Vec<BTreeMap<String, LabelDistribution>>> {
    models.iter().map(|m| pool.instances.iter().map(|x| Ok((x.id.clone(), m.distribution(x)?))).collect()).collect()
}

/// Generation `j >= 1`: every template is retrained on the labeled set plus
/// entries its subset of `prev` labeled. Weights carry over.
pub fn run_generation<B: Backend>(
    j: usize,
    prev: &[TunedPromptModel<B>],
    labeled: &Dataset,
    pool: &UnlabeledPool,
    cfg: &MptConfig,
) -> Result<(Vec<TunedPromptModel<B>>, GenerationRecord)> {
    if j == 0 {
        return Err(Error::InvalidSchedule("generation 0 is trained on the labeled set only".into()));
    }
    let base = class_counts(labeled);
    let schedule = GrowthSchedule::new(cfg.growth, base.clone(), j)?;
    let targets = growth_targets(&schedule, j)?;
    let scores = score_pool(prev, pool)?;
    let cached: Vec<Cached<'_>> = scores.iter().map(Cached).collect();

    let mut models = Vec::with_capacity(prev.len());
    let mut records = Vec::with_capacity(prev.len());
    for (i, model) in prev.iter().enumerate() {
        let subset = sample_subset(prev.len(), i, cfg.lambda, &mut subset_rng(cfg.seed, j, i));
        let members: Vec<(&Cached<'_>, f64)> = subset.iter().map(|&m| (&cached[m], prev[m].weight())).collect();
        let scored = label_pool(&members, pool)?;
        let selected = select_per_class(&scored, &targets, &base, &labeled.space)?;
        let train = assemble_training_set(labeled, &selected, pool)?;
        let next = train_prompt(model, &train, &cfg.training_for(j, i))?.with_generation(j);
        let labelers = subset.iter().map(|&m| String::from(prev[m].template_id())).collect();
        records.push(record(&next, labelers, &train, selected));
        models.push(next);
    }
    Ok((models, GenerationRecord { generation: j, templates: records }))
}

fn sharpen(p: &LabelDistribution, temperature: f64) -> Result<LabelDistribution> {
    if temperature == 1.0 {
        return Ok(p.clone());
    }
    LabelDistribution::normalized(p.probs().iter().map(|&x| libm::pow(x, 1.0 / temperature)).collect())
}

/// The labeled set with one-hot targets followed by every pool instance with
/// the weighted ensemble distribution of `last` as target.
pub fn build_distillation_set<B: Backend>(
    last: &[TunedPromptModel<B>],
    labeled: &Dataset,
    pool: &UnlabeledPool,
    temperature: f64,
) -> Result<SoftLabeledSet> {
    if last.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let members: Vec<(&TunedPromptModel<B>, f64)> = last.iter().map(|m| (m, m.weight())).collect();
    let mut rows = SoftLabeledSet::from_dataset(labeled).rows;
    for instance in &pool.instances {
        let p = sharpen(&aggregate(&members, instance)?, temperature)?;
        rows.push(SoftExample { instance: instance.clone(), target: p.into_vec(), source: RowSource::Pseudo });
    }
    SoftLabeledSet::new(labeled.space.clone(), rows)
}

/// Test metrics of one generation-0 template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMetrics {
    pub template_id: String,
    pub metrics: EvalReport,
}

pub struct RunResult<B: Backend> {
    /// Models of generations `0..=k`.
    pub generations: Vec<Vec<TunedPromptModel<B>>>,
    pub classifier: StandardClassifier<B>,
    pub trace: RunTrace,
    /// Final classifier on the test set.
    pub metrics: EvalReport,
    /// Last-generation ensemble on the test set.
    pub ensemble_metrics: EvalReport,
    /// Each generation-0 template alone on the test set.
    pub baselines: Vec<BaselineMetrics>,
}

impl<B: Backend> core::fmt::Debug for RunResult<B> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("RunResult")
            .field("generations", &self.generations.len())
            .field("trace", &self.trace)
            .field("metrics", &self.metrics)
            .finish()
    }
}

impl<B: Backend> RunResult<B> {
    pub fn best_baseline(&self) -> Option<&BaselineMetrics> {
        self.baselines
            .iter()
            .max_by(|a, b| a.metrics.macro_f1.partial_cmp(&b.metrics.macro_f1).unwrap_or(core::cmp::Ordering::Equal))
    }
}

/// A failed run with whatever was recorded before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: Error,
    pub trace: RunTrace,
}

impl core::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} (after {} generations)", self.error, self.trace.generations.len())
    }
}

/// First id shared between any two of the three sets.
pub fn check_disjoint(labeled: &Dataset, pool: &UnlabeledPool, test: &Dataset) -> Result<()> {
    let l: BTreeSet<&str> = labeled.ids().collect();
    let t: BTreeSet<&str> = test.ids().collect();
    for id in pool.ids() {
        if l.contains(id) || t.contains(id) {
            return Err(Error::OverlappingIds(id.into()));
        }
    }
    if let Some(id) = l.intersection(&t).next() {
        return Err(Error::OverlappingIds((*id).into()));
    }
    Ok(())
}

/// Warnings about the configuration relative to the data, such as growth
/// outrunning the pool.
pub fn run_warnings(cfg: &MptConfig, labeled: &Dataset, pool: &UnlabeledPool) -> Vec<String> {
    let mut out = Vec::new();
    let final_size = u32::try_from(cfg.generations)
        .ok()
        .and_then(|k| cfg.growth.checked_pow(k))
        .and_then(|m| m.checked_mul(labeled.len() as u64));
    let available = (pool.len() + labeled.len()) as u64;
    match final_size {
        Some(n) if n <= available => {}
        Some(n) => out.push(format!(
            "last generation needs {n} training examples but only {available} exist; pool entries will be duplicated"
        )),
        None => out.push("last generation size overflows; pool entries will be duplicated".into()),
    }
    out
}

fn predict_all<B: Backend>(members: &[(&TunedPromptModel<B>, f64)], test: &Dataset) -> Result<Vec<usize>> {
    test.instances().map(|x| Ok(aggregate(members, x)?.argmax())).collect()
}

fn gold(test: &Dataset) -> Vec<usize> {
    test.examples.iter().map(|e| e.label.index).collect()
}

/// Runs generations `0..=k`, distills the last one into a classifier and
/// evaluates on `test`.
pub fn run<B: Backend>(
    backend: Arc<B>,
    cfg: &MptConfig,
    labeled: &Dataset,
    pool: &UnlabeledPool,
    test: &Dataset,
) -> core::result::Result<RunResult<B>, RunFailure> {
    let mut trace = RunTrace::default();
    match run_inner(backend, cfg, labeled, pool, test, &mut trace) {
        Ok(r) => Ok(r),
        Err(error) => Err(RunFailure { error, trace }),
    }
}

fn run_inner<B: Backend>(
    backend: Arc<B>,
    cfg: &MptConfig,
    labeled: &Dataset,
    pool: &UnlabeledPool,
    test: &Dataset,
    trace: &mut RunTrace,
) -> Result<RunResult<B>> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if test.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if labeled.space != *cfg.verbalizer.space() || test.space != labeled.space {
        return Err(Error::InvalidConfig(alloc::vec![
            "labeled set, test set and verbalizer must share one label space".into()
        ]));
    }
    check_disjoint(labeled, pool, test)?;
    trace.warnings = run_warnings(cfg, labeled, pool);

    let (zero, record) = train_generation_zero(&backend, cfg, labeled)?;
    trace.generations.push(record);
    let mut generations = alloc::vec![zero];
    for j in 1..=cfg.generations {
        let (next, record) = run_generation(j, generations.last().expect("generation 0"), labeled, pool, cfg)?;
        trace.generations.push(record);
        generations.push(next);
    }

    let last = generations.last().expect("generation 0");
    let distill = build_distillation_set(last, labeled, pool, cfg.temperature)?;
    trace.distillation_rows = Some(distill.len());
    let classifier = train_classifier(Arc::clone(&backend), &distill, &cfg.training_for(cfg.generations + 1, 0))?;

    let space = &labeled.space;
    let gold = gold(test);
    let predictions: Vec<usize> = test.instances().map(|x| classifier.predict(x)).collect();
    let metrics = evaluate_indices(&predictions, &gold, space, AbsentClassPolicy::Include)?;
    let members: Vec<(&TunedPromptModel<B>, f64)> = last.iter().map(|m| (m, m.weight())).collect();
    let ensemble_metrics = evaluate_indices(&predict_all(&members, test)?, &gold, space, AbsentClassPolicy::Include)?;
    let baselines = generations[0]
        .iter()
        .map(|m| {
            Ok(BaselineMetrics {
                template_id: m.template_id().into(),
                metrics: evaluate_indices(&predict_all(&[(m, 1.0)], test)?, &gold, space, AbsentClassPolicy::Include)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RunResult { generations, classifier, trace: core::mem::take(trace), metrics, ensemble_metrics, baselines })
}
