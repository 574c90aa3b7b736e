//! Trainable mask-filling models and standard classifiers.
//!
//! [`Backend`] is the contract a model implementation satisfies. The crate
//! ships [`MockBackend`], a deterministic count-based stand-in that trains
//! in closed form. An adapter for a real pretrained masked LM implements the
//! same trait: `mask_logits` reads the mask position's output restricted to
//! the layout's token ids, `fit_prompt` tunes all encoder parameters jointly
//! with the soft-slot embeddings (initialized by copying randomly chosen
//! token embeddings under the seed), and the classifier methods put a dense
//! softmax head over the sequence representation.

mod mock;
mod probe;

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use mock::{MockBackend, MockClassifierState, MockPromptState};
pub use probe::{MockTokenizer, TokenId, VocabularyProbe, MOCK_MASK_ID};

use crate::data::{Dataset, Instance, LabelSpace};
use crate::error::{Error, Result};
use crate::prompting::{
    restricted_mask_distribution, soft_prompt_loss, wrap, LabelDistribution, PromptTemplate, VerbalizerLayout,
    WrappedInput,
};

/// Optimization settings shared by prompt tuning and classifier training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_length: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-5, batch_size: 16, epochs: 6, max_length: 128, seed: 1 }
    }
}

impl TrainingConfig {
    pub fn problems(&self) -> Vec<alloc::string::String> {
        let mut out = Vec::new();
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            out.push(alloc::format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            out.push("batch size must be positive".into());
        }
        if self.epochs == 0 {
            out.push("epochs must be positive".into());
        }
        if self.max_length == 0 {
            out.push("max sequence length must be positive".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().into_iter().next() {
            Some(p) => Err(Error::InvalidTrainingConfig(p)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowSource {
    Gold,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftExample {
    pub instance: Instance,
    /// Probability target over the label space.
    pub target: Vec<f64>,
    pub source: RowSource,
}

/// Training rows with probability targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabeledSet {
    pub space: LabelSpace,
    pub rows: Vec<SoftExample>,
}

impl SoftLabeledSet {
    pub fn new(space: LabelSpace, rows: Vec<SoftExample>) -> Result<Self> {
        for row in &rows {
            if row.target.len() != space.len() {
                return Err(Error::InvalidDistribution(alloc::format!(
                    "target for `{}` has {} entries, space has {}",
                    row.instance.id,
                    row.target.len(),
                    space.len()
                )));
            }
            LabelDistribution::new(row.target.clone())?;
        }
        Ok(Self { space, rows })
    }

    /// One-hot targets from gold labels.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let k = dataset.space.len();
        let rows = dataset
            .examples
            .iter()
            .map(|e| SoftExample {
                instance: e.instance.clone(),
                target: LabelDistribution::one_hot(k, e.label.index).into_vec(),
                source: RowSource::Gold,
            })
            .collect();
        Self { space: dataset.space.clone(), rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// A model implementation that can be prompt-tuned and can train a standard
/// classifier.
pub trait Backend {
    type Probe: VocabularyProbe;
    type PromptState: Clone + fmt::Debug;
    type ClassifierState: Clone + fmt::Debug;

    fn probe(&self) -> &Self::Probe;

    /// Fresh state for `template`, before any tuning.
    fn init_prompt(&self, template: &PromptTemplate, layout: &VerbalizerLayout, seed: u64) -> Self::PromptState;

    /// One logit per layout token at the mask position.
    fn mask_logits(
        &self,
        state: &Self::PromptState,
        wrapped: &WrappedInput,
        layout: &VerbalizerLayout,
    ) -> Result<Vec<f64>>;

    /// Tunes `state` on wrapped inputs with label-probability targets.
    fn fit_prompt(
        &self,
        state: &Self::PromptState,
        batch: &[(WrappedInput, Vec<f64>)],
        layout: &VerbalizerLayout,
        cfg: &TrainingConfig,
    ) -> Result<Self::PromptState>;

    fn prompt_fingerprint(&self, state: &Self::PromptState) -> u64;

    fn fit_classifier(&self, data: &SoftLabeledSet, cfg: &TrainingConfig) -> Result<Self::ClassifierState>;

    /// Pre-softmax class scores.
    fn classifier_logits(&self, state: &Self::ClassifierState, instance: &Instance) -> Vec<f64>;

    fn classifier_fingerprint(&self, state: &Self::ClassifierState) -> u64;
}

/// A backend model bound to one template and one verbalizer, with its
/// ensemble weight and generation.
pub struct TunedPromptModel<B: Backend> {
    backend: Arc<B>,
    template: PromptTemplate,
    layout: Arc<VerbalizerLayout>,
    weight: f64,
    generation: usize,
    max_length: usize,
    state: B::PromptState,
}

impl<B: Backend> Clone for TunedPromptModel<B> {
    fn clone(&self) -> Self {
        Self {
            backend: Arc::clone(&self.backend),
            template: self.template.clone(),
            layout: Arc::clone(&self.layout),
            weight: self.weight,
            generation: self.generation,
            max_length: self.max_length,
            state: self.state.clone(),
        }
    }
}

impl<B: Backend> fmt::Debug for TunedPromptModel<B> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TunedPromptModel")
            .field("template", &self.template.id())
            .field("weight", &self.weight)
            .field("generation", &self.generation)
            .field("state", &self.state)
            .finish()
    }
}

impl<B: Backend> TunedPromptModel<B> {
    /// Untrained model with weight 1 at generation 0.
    pub fn new(
        backend: Arc<B>,
        template: PromptTemplate,
        layout: Arc<VerbalizerLayout>,
        seed: u64,
        max_length: usize,
    ) -> Self {
        let state = backend.init_prompt(&template, &layout, seed);
        Self { backend, template, layout, weight: 1.0, generation: 0, max_length, state }
    }

    /// Rebuilds a model from a saved state.
    pub fn from_state(
        backend: Arc<B>,
        template: PromptTemplate,
        layout: Arc<VerbalizerLayout>,
        state: B::PromptState,
        weight: f64,
        generation: usize,
        max_length: usize,
    ) -> Result<Self> {
        Self { backend, template, layout, weight: 1.0, generation, max_length, state }.with_weight(weight)
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::NonPositiveWeight(weight));
        }
        self.weight = weight;
        Ok(self)
    }

    pub fn with_generation(mut self, generation: usize) -> Self {
        self.generation = generation;
        self
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn template_id(&self) -> &str {
        self.template.id()
    }

    pub fn layout(&self) -> &VerbalizerLayout {
        &self.layout
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    pub fn state(&self) -> &B::PromptState {
        &self.state
    }

    pub fn backend(&self) -> &Arc<B> {
        &self.backend
    }

    pub fn wrap(&self, instance: &Instance) -> Result<WrappedInput> {
        wrap(&self.template, instance, self.max_length, self.backend.probe())
    }

    /// Logits over the verbalizer tokens at the mask.
    pub fn score_mask(&self, wrapped: &WrappedInput) -> Result<Vec<f64>> {
        if wrapped.template_id != self.template.id() {
            return Err(Error::IncompatibleTemplate {
                expected: self.template.id().into(),
                got: wrapped.template_id.clone(),
            });
        }
        self.backend.mask_logits(&self.state, wrapped, &self.layout)
    }

    /// `p_T(y|x)` for one instance.
    pub fn distribution(&self, instance: &Instance) -> Result<LabelDistribution> {
        let logits = self.score_mask(&self.wrap(instance)?)?;
        restricted_mask_distribution(&logits, &self.layout)
    }

    fn wrapped_batch(&self, data: &SoftLabeledSet, max_length: usize) -> Result<Vec<(WrappedInput, Vec<f64>)>> {
        let probe = self.backend.probe();
        data.rows
            .iter()
            .map(|r| Ok((wrap(&self.template, &r.instance, max_length, probe)?, r.target.clone())))
            .collect()
    }

    /// Prompt loss of this model on `data` (soft targets; hard labels are
    /// one-hot).
    pub fn loss(&self, data: &SoftLabeledSet) -> Result<f64> {
        let batch = self.wrapped_batch(data, self.max_length)?;
        let scored = batch.iter().map(|(w, t)| Ok((self.score_mask(w)?, t.clone()))).collect::<Result<Vec<_>>>()?;
        soft_prompt_loss(&scored, &self.layout)
    }

    /// Fraction of `data` whose argmax distribution matches the gold label.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyEvaluation);
        }
        let mut hits = 0usize;
        for ex in &data.examples {
            if self.distribution(&ex.instance)?.argmax() == ex.label.index {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }

    /// Returns a copy tuned on `data`. Generation and weight carry over.
    pub fn train(&self, data: &SoftLabeledSet, cfg: &TrainingConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        cfg.validate()?;
        if data.space.len() != self.layout.num_labels() {
            return Err(Error::InvalidDistribution(alloc::format!(
                "training targets cover {} labels, verbalizer covers {}",
                data.space.len(),
                self.layout.num_labels()
            )));
        }
        let batch = self.wrapped_batch(data, cfg.max_length)?;
        let state = self.backend.fit_prompt(&self.state, &batch, &self.layout, cfg)?;
        Ok(Self { state, max_length: cfg.max_length, ..self.clone() })
    }

    pub fn fingerprint(&self) -> u64 {
        self.backend.prompt_fingerprint(&self.state)
    }
}

/// Trains `model` on a hard-labeled dataset.
pub fn train_prompt<B: Backend>(
    model: &TunedPromptModel<B>,
    data: &Dataset,
    cfg: &TrainingConfig,
) -> Result<TunedPromptModel<B>> {
    model.train(&SoftLabeledSet::from_dataset(data), cfg)
}

/// Classifier with a softmax head over the label space.
pub struct StandardClassifier<B: Backend> {
    backend: Arc<B>,
    space: LabelSpace,
    state: B::ClassifierState,
}

impl<B: Backend> Clone for StandardClassifier<B> {
    fn clone(&self) -> Self {
        Self { backend: Arc::clone(&self.backend), space: self.space.clone(), state: self.state.clone() }
    }
}

impl<B: Backend> fmt::Debug for StandardClassifier<B> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StandardClassifier").field("space", &self.space).field("state", &self.state).finish()
    }
}

impl<B: Backend> StandardClassifier<B> {
    pub fn from_state(backend: Arc<B>, space: LabelSpace, state: B::ClassifierState) -> Self {
        Self { backend, space, state }
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn state(&self) -> &B::ClassifierState {
        &self.state
    }

    pub fn classify(&self, instance: &Instance) -> LabelDistribution {
        let logits = self.backend.classifier_logits(&self.state, instance);
        softmax(&logits)
    }

    pub fn predict(&self, instance: &Instance) -> usize {
        self.classify(instance).argmax()
    }

    pub fn fingerprint(&self) -> u64 {
        self.backend.classifier_fingerprint(&self.state)
    }
}

/// Trains a standard classifier against soft targets.
pub fn train_classifier<B: Backend>(
    backend: Arc<B>,
    data: &SoftLabeledSet,
    cfg: &TrainingConfig,
) -> Result<StandardClassifier<B>> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    cfg.validate()?;
    for row in &data.rows {
        let sum: f64 = row.target.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(alloc::format!("target for `{}` sums to {sum}", row.instance.id)));
        }
    }
    let state = backend.fit_classifier(data, cfg)?;
    Ok(StandardClassifier { backend, space: data.space.clone(), state })
}

pub(crate) fn softmax(logits: &[f64]) -> LabelDistribution {
    let lse = crate::prompting::log_sum_exp(logits.iter().copied());
    let probs: Vec<f64> = logits.iter().map(|l| libm::exp(l - lse)).collect();
    LabelDistribution::normalized(probs).expect("softmax of finite logits")
}
