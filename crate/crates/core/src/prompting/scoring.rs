//! Restricted mask scoring and the prompt-tuning loss.
//!
//! Logits arrive one per [`VerbalizerToken`](super::VerbalizerToken) in
//! layout order. The softmax runs over those tokens only. A label word's
//! score is the mean probability of its tokens, and a label's score is the
//! sum of its words' scores.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::verbalizer::VerbalizerLayout;
use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

/// Probability vector over a label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    /// Accepts `probs` if entries are non-negative and finite and sum to one
    /// within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution("negative or non-finite entry".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidDistribution(alloc::format!("sums to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Divides non-negative weights by their sum.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::InvalidDistribution("weights do not have a positive sum".into()));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(classes: usize) -> Self {
        Self { probs: alloc::vec![1.0 / classes as f64; classes] }
    }

    pub fn one_hot(classes: usize, index: usize) -> Self {
        let mut probs = alloc::vec![0.0; classes];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.probs[index]
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.probs[self.argmax()]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

impl TryFrom<Vec<f64>> for LabelDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<LabelDistribution> for Vec<f64> {
    fn from(d: LabelDistribution) -> Self {
        d.probs
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}

fn check_logits(logits: &[f64], layout: &VerbalizerLayout) -> Result<()> {
    if layout.is_empty() {
        return Err(Error::EmptyVerbalizer);
    }
    if logits.len() != layout.len() {
        return Err(Error::LogitCountMismatch { expected: layout.len(), got: logits.len() });
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidDistribution("non-finite logit".into()));
    }
    Ok(())
}

/// Unnormalized label scores: for each label, the sum over its words of the
/// mean restricted-softmax probability of the word's tokens.
pub fn label_scores(logits: &[f64], layout: &VerbalizerLayout) -> Result<Vec<f64>> {
    check_logits(logits, layout)?;
    let lse = log_sum_exp(logits.iter().copied());
    let mut scores = alloc::vec![0.0; layout.num_labels()];
    for (tok, &logit) in layout.tokens().iter().zip(logits) {
        let p = libm::exp(logit - lse);
        scores[tok.label] += p / layout.word_len(tok.label, tok.word) as f64;
    }
    Ok(scores)
}

/// Label distribution at the mask, restricted to verbalizer tokens and
/// renormalized over labels.
pub fn restricted_mask_distribution(logits: &[f64], layout: &VerbalizerLayout) -> Result<LabelDistribution> {
    LabelDistribution::normalized(label_scores(logits, layout)?)
}

/// `ln` of the restricted probability mass carried by `label`'s words,
/// computed in log space so it stays finite for any finite logits.
pub fn label_log_mass(logits: &[f64], layout: &VerbalizerLayout, label: usize) -> Result<f64> {
    check_logits(logits, layout)?;
    if label >= layout.num_labels() {
        return Err(Error::LabelOutOfSpace(label));
    }
    let total = log_sum_exp(logits.iter().copied());
    let gold = log_sum_exp(
        layout
            .tokens()
            .iter()
            .zip(logits)
            .filter(|(t, _)| t.label == label)
            .map(|(t, &l)| l - libm::log(layout.word_len(t.label, t.word) as f64)),
    );
    Ok(gold - total)
}

/// Mean negative log restricted mass of the gold label over a batch of
/// `(logits, gold label index)` pairs.
pub fn prompt_loss<L: AsRef<[f64]>>(batch: &[(L, usize)], layout: &VerbalizerLayout) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for (logits, label) in batch {
        total -= label_log_mass(logits.as_ref(), layout, *label)?;
    }
    Ok(total / batch.len() as f64)
}

/// Soft-target form of [`prompt_loss`]: each row contributes
/// `-sum_y t_y ln mass_y`. Identical to the hard loss for one-hot targets.
pub fn soft_prompt_loss<L: AsRef<[f64]>, T: AsRef<[f64]>>(batch: &[(L, T)], layout: &VerbalizerLayout) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for (logits, target) in batch {
        for (y, &t) in target.as_ref().iter().enumerate() {
            if t > 0.0 {
                total -= t * label_log_mass(logits.as_ref(), layout, y)?;
            }
        }
    }
    Ok(total / batch.len() as f64)
}
