//! A seeded, separable three-class task for exercising the full loop without
//! external data.
//!
//! Each class owns a vocabulary of signature words; an instance carries a few
//! words from its own class vocabulary mixed with shared filler. A handful of
//! labeled examples covers only part of each vocabulary, so the pool carries
//! information the labeled set does not.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, LabelSpace, LabeledExample, UnlabeledPool, TEXT_FIELD};
use crate::error::Result;
use crate::hash::mix;
use crate::prompting::tasks::{soft_template, TaskPreset};
use crate::prompting::{PromptTemplate, Segment, TemplateKind, Verbalizer};
use crate::sampling::{balanced_kshot, sample_pool};

pub const LABELS: [&str; 3] = ["Sports", "Science", "Music"];
const STEMS: [&str; 3] = ["spo", "sci", "mus"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub signature_words: usize,
    pub filler_words: usize,
    pub signature_per_instance: usize,
    pub filler_per_instance: usize,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self { signature_words: 30, filler_words: 200, signature_per_instance: 3, filler_per_instance: 6 }
    }
}

/// A labeled set, an unlabeled pool and a test set drawn from one task.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSplits {
    pub labeled: Dataset,
    pub pool: UnlabeledPool,
    pub test: Dataset,
}

pub fn space() -> LabelSpace {
    LabelSpace::new(LABELS).expect("static labels")
}

impl SyntheticTask {
    fn instance(&self, id: String, label: usize, rng: &mut ChaCha8Rng) -> Instance {
        let mut words: Vec<String> = Vec::new();
        for _ in 0..self.signature_per_instance {
            words.push(format!("{}{:03}", STEMS[label], rng.gen_range(0..self.signature_words)));
        }
        for _ in 0..self.filler_per_instance {
            words.push(format!("w{:03}", rng.gen_range(0..self.filler_words)));
        }
        words.shuffle(rng);
        Instance::new(id, words.join(" "))
    }

    /// `n` labeled examples with labels cycling through the classes. Ids
    /// are `{prefix}-{i}`.
    pub fn generate(&self, n: usize, prefix: &str, seed: u64) -> Dataset {
        let space = space();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let examples = (0..n)
            .map(|i| {
                let y = i % LABELS.len();
                let inst = self.instance(format!("{prefix}-{i}"), y, &mut rng);
                LabeledExample::new(inst, space.labels()[y].clone())
            })
            .collect();
        Dataset::new(space, examples)
    }

    /// Balanced `k`-shot labeled set, a pool of `pool` instances from the
    /// rest of the training source, and `test` held-out examples.
    pub fn splits(&self, k: usize, pool: usize, test: usize, seed: u64) -> Result<SyntheticSplits> {
        let source = self.generate(2 * k * LABELS.len() + pool, "train", mix(&[seed, 1]));
        let split = balanced_kshot(&source, k, mix(&[seed, 2]))?;
        let exclude: BTreeSet<String> = split.train.ids().chain(split.validation.ids()).map(String::from).collect();
        let all: Vec<Instance> = source.instances().cloned().collect();
        let pool = sample_pool(&all, pool, &exclude, mix(&[seed, 3]))?;
        let test = self.generate(test, "test", mix(&[seed, 4]));
        Ok(SyntheticSplits { labeled: split.train, pool, test })
    }
}

fn lit(s: &str) -> Segment {
    Segment::Literal(s.into())
}

fn hard(id: &str, segments: Vec<Segment>) -> PromptTemplate {
    PromptTemplate::new(id, TemplateKind::Hard, segments).expect("static hard template")
}

pub fn preset() -> TaskPreset {
    let space = space();
    let verbalizer = Verbalizer::new(
        &space,
        [("Sports", vec!["sports", "game"]), ("Science", vec!["science"]), ("Music", vec!["music", "song"])],
    )
    .expect("static verbalizer");
    let x = || Segment::Slot(TEXT_FIELD.into());
    let description = "Each text is about sports, science or music.";
    let templates = vec![
        soft_template("synthetic", 2),
        soft_template("synthetic", 3),
        hard("synthetic-hard-1", vec![Segment::Description, x(), lit(". Topic:"), Segment::Mask])
            .with_description(description)
            .expect("static description"),
        hard("synthetic-hard-2", vec![Segment::Description, x(), lit(". This text is about"), Segment::Mask])
            .with_description(description)
            .expect("static description"),
        hard("synthetic-hard-3", vec![x(), lit(". This text is about"), Segment::Mask]),
        hard("synthetic-hard-4", vec![lit("Topic:"), Segment::Mask, lit("."), x()]),
    ];
    TaskPreset {
        name: "synthetic".into(),
        space,
        verbalizer,
        templates,
        description: Some(description.into()),
        max_length: 64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::class_counts;

    #[test]
    fn generation_is_seeded() {
        let t = SyntheticTask::default();
        assert_eq!(t.generate(30, "a", 4), t.generate(30, "a", 4));
        assert_ne!(t.generate(30, "a", 4), t.generate(30, "a", 5));
    }

    #[test]
    fn signature_words_identify_the_class() {
        let d = SyntheticTask::default().generate(60, "a", 1);
        for ex in &d.examples {
            let stem = STEMS[ex.label.index];
            assert!(ex.instance.text.split(' ').any(|w| w.starts_with(stem)));
            for (other, s) in STEMS.iter().enumerate() {
                if other != ex.label.index {
                    assert!(!ex.instance.text.contains(s));
                }
            }
        }
    }

    #[test]
    fn splits_shapes() {
        let s = SyntheticTask::default().splits(4, 600, 90, 7).unwrap();
        assert_eq!(class_counts(&s.labeled).as_slice(), &[4, 4, 4]);
        assert_eq!(s.pool.len(), 600);
        assert_eq!(s.test.len(), 90);
        let labeled: BTreeSet<&str> = s.labeled.ids().collect();
        assert!(s.pool.ids().all(|id| !labeled.contains(id)));
    }

    #[test]
    fn preset_templates() {
        let p = preset();
        assert_eq!(p.soft_templates().count(), 2);
        assert_eq!(p.hard_templates().count(), 4);
    }
}
