//! Low-resource splits: balanced K-shot, distribution-preserving samples and
//! unlabeled pools. Every sampler is a pure function of the source order,
//! its parameters and the seed.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, UnlabeledPool};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Balanced,
    Proportional,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub mode: SampleMode,
    pub k: usize,
    pub seed: u64,
    /// Proportional total; defaults to `k * |labels|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
    /// Fail instead of warn when a non-empty class gets a zero quota.
    #[serde(default)]
    pub strict: bool,
}

impl SamplePlan {
    pub const DEFAULT_SHOTS: [usize; 6] = [4, 8, 16, 32, 64, 128];

    pub fn balanced(k: usize, seed: u64) -> Self {
        Self { mode: SampleMode::Balanced, k, seed, total: None, strict: false }
    }

    pub fn proportional(k: usize, seed: u64) -> Self {
        Self { mode: SampleMode::Proportional, k, seed, total: None, strict: false }
    }

    pub fn apply(&self, source: &Dataset) -> Result<Split> {
        match self.mode {
            SampleMode::Balanced => balanced_kshot(source, self.k, self.seed),
            SampleMode::Proportional => {
                let total = self.total.unwrap_or(self.k * source.space.len());
                proportional_sample(source, total, self.seed, self.strict)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub warnings: Vec<String>,
}

fn shuffled_by_class(source: &Dataset, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = alloc::vec![Vec::new(); source.space.len()];
    for (i, ex) in source.examples.iter().enumerate() {
        if let Some(bucket) = by_class.get_mut(ex.label.index) {
            bucket.push(i);
        }
    }
    for bucket in &mut by_class {
        bucket.shuffle(&mut rng);
    }
    by_class
}

fn take(source: &Dataset, picks: &[Vec<usize>]) -> Dataset {
    let mut idx: Vec<usize> = picks.iter().flatten().copied().collect();
    idx.sort_unstable();
    Dataset::new(source.space.clone(), idx.into_iter().map(|i| source.examples[i].clone()).collect())
}

fn split_counts(source: &Dataset, counts: &[usize], seed: u64, warnings: Vec<String>) -> Result<Split> {
    let by_class = shuffled_by_class(source, seed);
    for (label, (bucket, &c)) in source.space.labels().iter().zip(by_class.iter().zip(counts)) {
        if bucket.len() < 2 * c {
            return Err(Error::InsufficientClass {
                label: label.name.clone(),
                available: bucket.len(),
                required: 2 * c,
            });
        }
    }
    let train: Vec<Vec<usize>> = by_class.iter().zip(counts).map(|(b, &c)| b[..c].to_vec()).collect();
    let validation: Vec<Vec<usize>> = by_class.iter().zip(counts).map(|(b, &c)| b[c..2 * c].to_vec()).collect();
    Ok(Split { train: take(source, &train), validation: take(source, &validation), warnings })
}

/// `k` training and `k` validation examples per class, disjoint. Examples
/// keep their source order within each split.
pub fn balanced_kshot(source: &Dataset, k: usize, seed: u64) -> Result<Split> {
    split_counts(source, &alloc::vec![k; source.space.len()], seed, Vec::new())
}

/// Largest-remainder apportionment of `total` over `sizes`. Ties in the
/// remainder go to the larger class, then the lower index.
pub fn largest_remainder(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return alloc::vec![0; sizes.len()];
    }
    // Exact integer quotas: total * size / n = floor + rem / n.
    let mut counts: Vec<usize> = sizes.iter().map(|&s| total * s / n).collect();
    let rems: Vec<usize> = sizes.iter().map(|&s| total * s % n).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(sizes[b].cmp(&sizes[a])).then(a.cmp(&b)));
    let short = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

/// `total` training examples following the source label distribution, and a
/// validation set with the same per-class counts drawn from the remainder.
pub fn proportional_sample(source: &Dataset, total: usize, seed: u64, strict: bool) -> Result<Split> {
    if 2 * total > source.len() {
        return Err(Error::PoolTooSmall { available: source.len(), required: 2 * total });
    }
    let sizes = crate::data::class_counts(source);
    let counts = largest_remainder(sizes.as_slice(), total);
    let mut warnings = Vec::new();
    for (label, (&c, &s)) in source.space.labels().iter().zip(counts.iter().zip(sizes.as_slice())) {
        if c == 0 && s > 0 {
            if strict {
                return Err(Error::InsufficientClass { label: label.name.clone(), available: s, required: 1 });
            }
            warnings.push(alloc::format!("class `{}` gets no examples at total {total}", label.name));
        }
    }
    split_counts(source, &counts, seed, warnings)
}

/// `n` instances from `source` that are not in `exclude`.
pub fn sample_pool(source: &[Instance], n: usize, exclude: &BTreeSet<String>, seed: u64) -> Result<UnlabeledPool> {
    let mut available: Vec<&Instance> = source.iter().filter(|i| !exclude.contains(&i.id)).collect();
    if available.len() < n {
        return Err(Error::PoolTooSmall { available: available.len(), required: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    available.shuffle(&mut rng);
    Ok(UnlabeledPool::new(available.into_iter().take(n).cloned().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{class_counts, LabelSpace, LabeledExample};
    use alloc::format;
    use alloc::vec;

    fn source(sizes: &[usize]) -> Dataset {
        let names: Vec<String> = (0..sizes.len()).map(|i| format!("L{i}")).collect();
        let space = LabelSpace::new(names).unwrap();
        let mut examples = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            for j in 0..n {
                examples
                    .push(LabeledExample::new(Instance::new(format!("c{c}-{j}"), "t"), space.get(c).unwrap().clone()));
            }
        }
        Dataset::new(space, examples)
    }

    fn ids(d: &Dataset) -> BTreeSet<String> {
        d.ids().map(String::from).collect()
    }

    #[test]
    fn balanced_sizes_and_determinism() {
        let src = source(&[20, 20, 20]);
        let a = balanced_kshot(&src, 4, 9).unwrap();
        assert_eq!(a.train.len(), 12);
        assert_eq!(class_counts(&a.validation).as_slice(), &[4, 4, 4]);
        assert!(ids(&a.train).is_disjoint(&ids(&a.validation)));
        let b = balanced_kshot(&src, 4, 9).unwrap();
        assert_eq!(ids(&a.train), ids(&b.train));
        assert_ne!(ids(&a.train), ids(&balanced_kshot(&src, 4, 10).unwrap().train));
    }

    #[test]
    fn balanced_insufficient_class() {
        let src = source(&[20, 5]);
        assert_eq!(
            balanced_kshot(&src, 4, 1),
            Err(Error::InsufficientClass { label: "L1".into(), available: 5, required: 8 })
        );
    }

    #[test]
    fn largest_remainder_hand_values() {
        // quotas 27.84 / 13.92 / 6.24
        assert_eq!(largest_remainder(&[58, 29, 13], 48), vec![28, 14, 6]);
        assert_eq!(largest_remainder(&[10, 10, 10], 48), vec![16, 16, 16]);
        assert_eq!(largest_remainder(&[50, 25, 25], 100), vec![50, 25, 25]);
    }

    #[test]
    fn proportional_split() {
        let src = source(&[580, 290, 130]);
        let s = proportional_sample(&src, 48, 3, false).unwrap();
        assert_eq!(class_counts(&s.train).as_slice(), &[28, 14, 6]);
        assert_eq!(class_counts(&s.validation).as_slice(), &[28, 14, 6]);
        assert!(ids(&s.train).is_disjoint(&ids(&s.validation)));
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn proportional_zero_quota() {
        let src = source(&[300, 300, 2]);
        let s = proportional_sample(&src, 10, 1, false).unwrap();
        assert_eq!(s.warnings.len(), 1);
        assert!(matches!(proportional_sample(&src, 10, 1, true), Err(Error::InsufficientClass { .. })));
    }

    #[test]
    fn pool_sampling() {
        let src: Vec<Instance> = (0..10_000).map(|i| Instance::new(format!("u{i}"), "t")).collect();
        let exclude: BTreeSet<String> = (0..48).map(|i| format!("u{i}")).collect();
        let pool = sample_pool(&src, 600, &exclude, 5).unwrap();
        assert_eq!(pool.len(), 600);
        assert!(pool.ids().all(|id| !exclude.contains(id)));
        assert_eq!(pool, sample_pool(&src, 600, &exclude, 5).unwrap());

        let all = sample_pool(&src, 10_000 - 48, &exclude, 5).unwrap();
        assert_eq!(all.len(), 10_000 - 48);
        assert!(matches!(sample_pool(&src, 9_999, &exclude, 5), Err(Error::PoolTooSmall { .. })));
    }
}
