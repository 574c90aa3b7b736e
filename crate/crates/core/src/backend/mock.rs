//! Deterministic count-based backend.
//!
//! A mask logit for verbalizer token `v` is
//!
//! ```text
//! bias[v] + sum_s soft[s][v] + sum_{t in bag(x)} (noise(seed, template, t, v) + weight[t][v])
//! ```
//!
//! where `bag(x)` is the sorted multiset of instance tokens. `noise` is a
//! fixed seeded hash, so two templates disagree before any training. Each
//! training epoch computes a smoothed naive-Bayes log-likelihood table from
//! (token, target) co-occurrence counts and moves the state along it by the
//! step from a fixed grid that minimizes the soft prompt loss. A zero step
//! is always on the grid, so tuning never raises the training loss.
//!
//! `learning_rate` and `batch_size` have no effect here; `epochs` sets the
//! number of closed-form steps.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Backend, MockTokenizer, SoftLabeledSet, TokenId, TrainingConfig, VocabularyProbe};
use crate::data::Instance;
use crate::error::{Error, Result};
use crate::hash::{fnv1a64, mix, unit_interval, Fingerprint};
use crate::prompting::{soft_prompt_loss, PromptTemplate, TemplateKind, VerbalizerLayout, WrappedInput};

const STEP_GRID: [f64; 8] = [0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
const BIAS_TAG: u64 = 0xb1a5;
const SLOT_TAG: u64 = 0x5107;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockBackend {
    pub tokenizer: MockTokenizer,
    /// Amplitude of the per-template token noise.
    pub noise: f64,
    /// Amplitude of the per-template initial bias.
    pub bias: f64,
    /// Additive smoothing for count tables.
    pub smoothing: f64,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self { tokenizer: MockTokenizer::default(), noise: 0.3, bias: 0.5, smoothing: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockPromptState {
    pub template_id: String,
    pub seed: u64,
    /// Per layout token.
    pub bias: Vec<f64>,
    /// Per soft slot, per layout token.
    pub soft: Vec<Vec<f64>>,
    /// Learned per-token contributions, per layout token.
    pub weights: BTreeMap<TokenId, Vec<f64>>,
    pub steps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockClassifierState {
    pub log_prior: Vec<f64>,
    pub weights: BTreeMap<TokenId, Vec<f64>>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    fn noise_at(&self, state: &MockPromptState, token: TokenId, target: TokenId) -> f64 {
        let th = fnv1a64(state.template_id.as_bytes());
        self.noise * unit_interval(mix(&[state.seed, th, u64::from(token), u64::from(target)]))
    }

    fn logits_for_bag(&self, state: &MockPromptState, bag: &[TokenId], layout: &VerbalizerLayout) -> Vec<f64> {
        let mut logits = state.bias.clone();
        for slot in &state.soft {
            for (l, s) in logits.iter_mut().zip(slot) {
                *l += s;
            }
        }
        for &tok in bag {
            let learned = state.weights.get(&tok);
            for (v, entry) in layout.tokens().iter().enumerate() {
                logits[v] += self.noise_at(state, tok, entry.token);
                if let Some(w) = learned {
                    logits[v] += w[v];
                }
            }
        }
        logits
    }

    /// Centered smoothed log-likelihood table `token -> per-label score`,
    /// plus centered per-label log priors.
    fn naive_bayes<'a>(
        &self,
        rows: impl Iterator<Item = (&'a [TokenId], &'a [f64])>,
        labels: usize,
    ) -> (BTreeMap<TokenId, Vec<f64>>, Vec<f64>) {
        let alpha = self.smoothing;
        let mut counts: BTreeMap<TokenId, Vec<f64>> = BTreeMap::new();
        let mut totals = alloc::vec![0.0; labels];
        let mut prior = alloc::vec![0.0; labels];
        let mut n = 0.0;
        for (bag, target) in rows {
            n += 1.0;
            for (y, &t) in target.iter().enumerate() {
                prior[y] += t;
                totals[y] += t * bag.len() as f64;
            }
            for tok in bag {
                let c = counts.entry(*tok).or_insert_with(|| alloc::vec![0.0; labels]);
                for (y, &t) in target.iter().enumerate() {
                    c[y] += t;
                }
            }
        }
        let vocab = counts.len() as f64;
        let table = counts
            .into_iter()
            .map(|(tok, c)| {
                let row: Vec<f64> =
                    c.iter().zip(&totals).map(|(&cy, &ty)| libm::log((cy + alpha) / (ty + alpha * vocab))).collect();
                (tok, centered(row))
            })
            .collect();
        let log_prior = prior.iter().map(|&p| libm::log((p + alpha) / (n + alpha * labels as f64))).collect();
        (table, centered(log_prior))
    }

    fn instance_tokens(&self, instance: &Instance) -> Vec<TokenId> {
        let mut bag = self.tokenizer.tokenize(&instance.text);
        for value in instance.aux.values() {
            bag.extend(self.tokenizer.tokenize(value));
        }
        bag.sort_unstable();
        bag
    }
}

fn centered(mut row: Vec<f64>) -> Vec<f64> {
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    for v in &mut row {
        *v -= mean;
    }
    row
}

impl Backend for MockBackend {
    type Probe = MockTokenizer;
    type PromptState = MockPromptState;
    type ClassifierState = MockClassifierState;

    fn probe(&self) -> &MockTokenizer {
        &self.tokenizer
    }

    fn init_prompt(&self, template: &PromptTemplate, layout: &VerbalizerLayout, seed: u64) -> MockPromptState {
        let th = fnv1a64(template.id().as_bytes());
        let bias = layout
            .tokens()
            .iter()
            .map(|e| self.bias * unit_interval(mix(&[seed, th, BIAS_TAG, u64::from(e.token)])))
            .collect();
        let mut state = MockPromptState {
            template_id: template.id().into(),
            seed,
            bias,
            soft: Vec::new(),
            weights: BTreeMap::new(),
            steps: Vec::new(),
        };
        // Each soft slot starts as a copy of a seeded pseudo-random token's
        // noise row.
        let soft = (0..template.soft_slot_count())
            .map(|s| {
                let donor = mix(&[seed, th, SLOT_TAG, s as u64]) as TokenId;
                layout.tokens().iter().map(|e| self.noise_at(&state, donor, e.token)).collect()
            })
            .collect();
        state.soft = soft;
        state
    }

    fn mask_logits(
        &self,
        state: &MockPromptState,
        wrapped: &WrappedInput,
        layout: &VerbalizerLayout,
    ) -> Result<Vec<f64>> {
        if state.template_id != wrapped.template_id {
            return Err(Error::IncompatibleTemplate {
                expected: state.template_id.clone(),
                got: wrapped.template_id.clone(),
            });
        }
        if state.bias.len() != layout.len() {
            return Err(Error::LogitCountMismatch { expected: layout.len(), got: state.bias.len() });
        }
        Ok(self.logits_for_bag(state, &wrapped.token_bag(), layout))
    }

    fn fit_prompt(
        &self,
        state: &MockPromptState,
        batch: &[(WrappedInput, Vec<f64>)],
        layout: &VerbalizerLayout,
        cfg: &TrainingConfig,
    ) -> Result<MockPromptState> {
        if batch.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let labels = layout.num_labels();
        let bags: Vec<Vec<TokenId>> = batch.iter().map(|(w, _)| w.token_bag()).collect();
        let (table, log_prior) =
            self.naive_bayes(bags.iter().zip(batch).map(|(b, (_, t))| (b.as_slice(), t.as_slice())), labels);

        // Per layout token: the label's prior minus ln(#words) so a label's
        // summed word mass follows the naive-Bayes posterior.
        let bias_dir: Vec<f64> =
            layout.tokens().iter().map(|e| log_prior[e.label] - libm::log(layout.word_count(e.label) as f64)).collect();
        let token_dir = |tok: &TokenId| -> Option<Vec<f64>> {
            table.get(tok).map(|row| layout.tokens().iter().map(|e| row[e.label]).collect())
        };
        let directions: Vec<Vec<f64>> = bags
            .iter()
            .map(|bag| {
                let mut d = bias_dir.clone();
                for tok in bag {
                    if let Some(row) = token_dir(tok) {
                        for (dv, r) in d.iter_mut().zip(&row) {
                            *dv += r;
                        }
                    }
                }
                d
            })
            .collect();

        let targets: Vec<&[f64]> = batch.iter().map(|(_, t)| t.as_slice()).collect();
        let mut current = state.clone();
        for _ in 0..cfg.epochs {
            let base: Vec<Vec<f64>> = bags.iter().map(|b| self.logits_for_bag(&current, b, layout)).collect();
            let loss_at = |eta: f64| -> Result<f64> {
                let rows: Vec<(Vec<f64>, &[f64])> = base
                    .iter()
                    .zip(&directions)
                    .zip(&targets)
                    .map(|((b, d), t)| (b.iter().zip(d).map(|(x, y)| x + eta * y).collect(), *t))
                    .collect();
                soft_prompt_loss(&rows, layout)
            };
            let before = loss_at(0.0)?;
            let mut best = (0.0, before);
            for &eta in &STEP_GRID[1..] {
                let l = loss_at(eta)?;
                if l < best.1 {
                    best = (eta, l);
                }
            }
            if best.0 == 0.0 {
                break;
            }
            let eta = best.0;
            let mut next = current.clone();
            let soft_slots = next.soft.len();
            let bias_target: &mut Vec<f64> = match (state_kind(&next), soft_slots) {
                (TemplateKind::Soft, n) if n > 0 => &mut next.soft[0],
                _ => &mut next.bias,
            };
            for (b, d) in bias_target.iter_mut().zip(&bias_dir) {
                *b += eta * d;
            }
            for tok in table.keys() {
                let row = token_dir(tok).expect("token from table");
                let w = next.weights.entry(*tok).or_insert_with(|| alloc::vec![0.0; layout.len()]);
                for (wv, r) in w.iter_mut().zip(&row) {
                    *wv += eta * r;
                }
            }
            next.steps.push(eta);

            // The applied state sums in a different order than the line
            // search; keep the step only if the real loss did not rise.
            let applied: Vec<(Vec<f64>, &[f64])> =
                bags.iter().zip(&targets).map(|(b, t)| (self.logits_for_bag(&next, b, layout), *t)).collect();
            if soft_prompt_loss(&applied, layout)? <= before {
                current = next;
            } else {
                break;
            }
        }
        Ok(current)
    }

    fn prompt_fingerprint(&self, state: &MockPromptState) -> u64 {
        let mut fp = Fingerprint::default();
        fp.str(&state.template_id).u64(state.seed);
        for v in state.bias.iter().chain(state.soft.iter().flatten()).chain(&state.steps) {
            fp.f64(*v);
        }
        for (tok, row) in &state.weights {
            fp.u64(u64::from(*tok));
            for v in row {
                fp.f64(*v);
            }
        }
        fp.finish()
    }

    fn fit_classifier(&self, data: &SoftLabeledSet, _cfg: &TrainingConfig) -> Result<MockClassifierState> {
        if data.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let bags: Vec<Vec<TokenId>> = data.rows.iter().map(|r| self.instance_tokens(&r.instance)).collect();
        let (weights, log_prior) = self.naive_bayes(
            bags.iter().zip(&data.rows).map(|(b, r)| (b.as_slice(), r.target.as_slice())),
            data.space.len(),
        );
        Ok(MockClassifierState { log_prior, weights })
    }

    fn classifier_logits(&self, state: &MockClassifierState, instance: &Instance) -> Vec<f64> {
        let mut logits = state.log_prior.clone();
        for tok in self.instance_tokens(instance) {
            if let Some(row) = state.weights.get(&tok) {
                for (l, w) in logits.iter_mut().zip(row) {
                    *l += w;
                }
            }
        }
        logits
    }

    fn classifier_fingerprint(&self, state: &MockClassifierState) -> u64 {
        let mut fp = Fingerprint::default();
        for v in &state.log_prior {
            fp.f64(*v);
        }
        for (tok, row) in &state.weights {
            fp.u64(u64::from(*tok));
            for v in row {
                fp.f64(*v);
            }
        }
        fp.finish()
    }
}

fn state_kind(state: &MockPromptState) -> TemplateKind {
    if state.soft.is_empty() {
        TemplateKind::Hard
    } else {
        TemplateKind::Soft
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{train_classifier, train_prompt, RowSource, SoftExample, TunedPromptModel};
    use crate::data::{Dataset, LabelSpace, LabeledExample};
    use crate::prompting::{tasks, Verbalizer};
    use alloc::format;
    use alloc::sync::Arc;
    use alloc::vec;

    fn separable(n: usize) -> Dataset {
        let space = LabelSpace::new(["A", "B"]).unwrap();
        let examples = (0..n)
            .map(|i| {
                let y = i % 2;
                let text =
                    if y == 0 { format!("alpha common word{i} apex") } else { format!("beta common word{i} base") };
                LabeledExample::new(Instance::new(format!("e{i}"), text), space.get(y).unwrap().clone())
            })
            .collect();
        Dataset::new(space, examples)
    }

    fn model(seed: u64, template: &str) -> TunedPromptModel<MockBackend> {
        let space = LabelSpace::new(["A", "B"]).unwrap();
        let verbalizer = Verbalizer::new(&space, [("A", vec!["first"]), ("B", vec!["second"])]).unwrap();
        let backend = Arc::new(MockBackend::default());
        let layout = Arc::new(VerbalizerLayout::compile(&verbalizer, backend.probe()).unwrap());
        let t = tasks::soft_template(template, 2);
        TunedPromptModel::new(backend, t, layout, seed, 64)
    }

    #[test]
    fn scoring_is_repeatable() {
        let m = model(7, "t");
        let w = m.wrap(&Instance::new("i", "some fixed input")).unwrap();
        assert_eq!(m.score_mask(&w).unwrap(), m.score_mask(&w).unwrap());
    }

    #[test]
    fn untrained_logits_depend_on_bag_only() {
        let m = model(7, "t");
        let a = m.wrap(&Instance::new("a", "x y z y")).unwrap();
        let b = m.wrap(&Instance::new("b", "y z y x")).unwrap();
        assert_eq!(m.score_mask(&a).unwrap(), m.score_mask(&b).unwrap());
        let other_seed = model(8, "t");
        assert_ne!(m.score_mask(&a).unwrap(), other_seed.score_mask(&a).unwrap());
    }

    #[test]
    fn wrong_template_rejected() {
        let m = model(7, "t");
        let other = model(7, "u");
        let w = other.wrap(&Instance::new("a", "x")).unwrap();
        assert!(matches!(m.score_mask(&w), Err(Error::IncompatibleTemplate { .. })));
    }

    #[test]
    fn training_fits_separable_data() {
        let data = separable(20);
        let m = model(3, "t");
        let cfg = TrainingConfig::default();
        let trained = train_prompt(&m, &data, &cfg).unwrap();
        assert_eq!(trained.accuracy(&data).unwrap(), 1.0);
        let set = SoftLabeledSet::from_dataset(&data);
        assert!(trained.loss(&set).unwrap() <= m.loss(&set).unwrap());
        let probe = Instance::new("p", "alpha something new");
        assert_eq!(trained.distribution(&probe).unwrap().argmax(), 0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(20);
        let cfg = TrainingConfig::default();
        let a = train_prompt(&model(3, "t"), &data, &cfg).unwrap();
        let b = train_prompt(&model(3, "t"), &data, &cfg).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn one_hot_soft_rows_equal_hard_labels() {
        let data = separable(10);
        let cfg = TrainingConfig::default();
        let hard = train_prompt(&model(3, "t"), &data, &cfg).unwrap();
        let mut soft = SoftLabeledSet::from_dataset(&data);
        for r in &mut soft.rows {
            r.source = RowSource::Pseudo;
        }
        let soft = model(3, "t").train(&soft, &cfg).unwrap();
        assert_eq!(hard.state(), soft.state());
    }

    #[test]
    fn empty_training_set_rejected() {
        let data = Dataset::empty(LabelSpace::new(["A", "B"]).unwrap());
        assert_eq!(
            train_prompt(&model(1, "t"), &data, &TrainingConfig::default()).unwrap_err(),
            Error::EmptyTrainingSet
        );
    }

    #[test]
    fn classifier_fits_separable_one_hot_targets() {
        let data = separable(20);
        let backend = Arc::new(MockBackend::default());
        let c = train_classifier(backend, &SoftLabeledSet::from_dataset(&data), &TrainingConfig::default()).unwrap();
        for ex in &data.examples {
            assert_eq!(c.predict(&ex.instance), ex.label.index);
        }
    }

    #[test]
    fn uniform_targets_give_prior_everywhere() {
        let data = separable(20);
        let mut set = SoftLabeledSet::from_dataset(&data);
        for r in &mut set.rows {
            r.target = vec![0.5, 0.5];
        }
        let c = train_classifier(Arc::new(MockBackend::default()), &set, &TrainingConfig::default()).unwrap();
        let first = c.classify(&data.examples[0].instance);
        for ex in &data.examples {
            assert_eq!(c.classify(&ex.instance), first);
        }
        assert_eq!(first.probs(), &[0.5, 0.5]);
        assert_eq!(first.argmax(), 0);
    }

    #[test]
    fn classifier_bag_of_tokens() {
        let data = separable(20);
        let c = train_classifier(
            Arc::new(MockBackend::default()),
            &SoftLabeledSet::from_dataset(&data),
            &TrainingConfig::default(),
        )
        .unwrap();
        let a = c.classify(&Instance::new("a", "alpha base common"));
        let b = c.classify(&Instance::new("b", "common base alpha"));
        assert_eq!(a, b);
        let sum: f64 = a.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn soft_rows_validated() {
        let space = LabelSpace::new(["A", "B"]).unwrap();
        let bad = SoftExample { instance: Instance::new("i", "t"), target: vec![0.7, 0.7], source: RowSource::Pseudo };
        assert!(SoftLabeledSet::new(space, vec![bad]).is_err());
    }
}
