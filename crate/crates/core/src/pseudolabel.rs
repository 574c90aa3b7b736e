//! Ensemble pseudo-labeling and confidence-ranked per-class selection.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, TunedPromptModel};
use crate::data::{ClassCounts, Dataset, Instance, LabelSpace, LabeledExample, UnlabeledPool};
use crate::error::{Error, Result};
use crate::prompting::LabelDistribution;

/// Anything that yields a label distribution for an instance.
pub trait LabelScorer {
    fn label_distribution(&self, instance: &Instance) -> Result<LabelDistribution>;
}

impl<B: Backend> LabelScorer for TunedPromptModel<B> {
    fn label_distribution(&self, instance: &Instance) -> Result<LabelDistribution> {
        self.distribution(instance)
    }
}

/// `(1/Z) * sum_i w_i * p_i` with `Z = sum_i w_i`.
///
/// Members are accumulated in a canonical order, so the result is
/// bit-identical under any permutation of `members`.
pub fn weighted_mean(members: &[(f64, &LabelDistribution)]) -> Result<LabelDistribution> {
    let (_, first) = members.first().ok_or(Error::EmptyEnsemble)?;
    let mut acc = alloc::vec![0.0; first.len()];
    let mut z = 0.0;
    let mut ordered: Vec<&(f64, &LabelDistribution)> = members.iter().collect();
    ordered.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then_with(|| {
            a.1.probs()
                .iter()
                .zip(b.1.probs())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    });
    for (w, p) in ordered {
        if !(w.is_finite() && *w > 0.0) {
            return Err(Error::NonPositiveWeight(*w));
        }
        if p.len() != acc.len() {
            return Err(Error::InvalidDistribution("ensemble members disagree on label count".into()));
        }
        z += w;
        for (a, &pi) in acc.iter_mut().zip(p.probs()) {
            *a += w * pi;
        }
    }
    LabelDistribution::new(acc.into_iter().map(|a| a / z).collect())
}

/// Weighted ensemble distribution for one instance; each member wraps the
/// instance with its own template.
pub fn aggregate<S: LabelScorer>(members: &[(&S, f64)], instance: &Instance) -> Result<LabelDistribution> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let dists = members.iter().map(|(m, _)| m.label_distribution(instance)).collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, &LabelDistribution)> = members.iter().map(|(_, w)| *w).zip(&dists).collect();
    weighted_mean(&pairs)
}

/// One pool instance with its ensemble distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPseudoExample {
    pub instance_id: String,
    pub distribution: LabelDistribution,
    pub argmax_label: usize,
    pub score: f64,
    /// Class that claimed the entry through the shortage fallback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub override_label: Option<usize>,
    /// True for copies added when a class could not be filled otherwise.
    #[serde(default)]
    pub duplicate: bool,
}

impl ScoredPseudoExample {
    pub fn new(instance_id: impl Into<String>, distribution: LabelDistribution) -> Self {
        let argmax_label = distribution.argmax();
        let score = distribution.get(argmax_label);
        Self {
            instance_id: instance_id.into(),
            distribution,
            argmax_label,
            score,
            override_label: None,
            duplicate: false,
        }
    }

    /// Hard label used for training: the override if set, else the argmax.
    pub fn label(&self) -> usize {
        self.override_label.unwrap_or(self.argmax_label)
    }
}

/// Scores every pool instance with the ensemble. Output is ordered by
/// instance id.
pub fn label_pool<S: LabelScorer>(members: &[(&S, f64)], pool: &UnlabeledPool) -> Result<Vec<ScoredPseudoExample>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut out = pool
        .instances
        .iter()
        .map(|inst| Ok(ScoredPseudoExample::new(inst.id.clone(), aggregate(members, inst)?)))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok(out)
}

/// Per-class training-set sizes across generations: `c_j = d^j * c_0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthSchedule {
    pub factor: u64,
    pub base: ClassCounts,
    pub generations: usize,
}

impl GrowthSchedule {
    pub fn new(factor: u64, base: ClassCounts, generations: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidSchedule("growth factor must be at least 1".into()));
        }
        if base.is_empty() {
            return Err(Error::InvalidSchedule("no classes".into()));
        }
        Ok(Self { factor, base, generations })
    }
}

/// Target per-class counts at generation `j`.
pub fn growth_targets(schedule: &GrowthSchedule, j: usize) -> Result<ClassCounts> {
    if j > schedule.generations {
        return Err(Error::InvalidSchedule(alloc::format!(
            "generation {j} beyond the last generation {}",
            schedule.generations
        )));
    }
    let exp = u32::try_from(j).map_err(|_| Error::GrowthOverflow(j))?;
    let mult = schedule.factor.checked_pow(exp).ok_or(Error::GrowthOverflow(j))?;
    let mult = usize::try_from(mult).map_err(|_| Error::GrowthOverflow(j))?;
    schedule
        .base
        .as_slice()
        .iter()
        .map(|&c| c.checked_mul(mult).ok_or(Error::GrowthOverflow(j)))
        .collect::<Result<Vec<_>>>()
        .map(ClassCounts::from_vec)
}

fn by_score_then_id(a: &ScoredPseudoExample, b: &ScoredPseudoExample) -> Ordering {
    b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then_with(|| a.instance_id.cmp(&b.instance_id))
}

/// Picks `targets[y] - base[y]` entries for each class `y`.
///
/// First, for every class, entries predicted as `y` are taken by descending
/// score (ties by id). Then, in label order, a class still short takes
/// entries no class has claimed by descending `p(y)` (ties by id) and
/// relabels them to `y` via `override_label`. A class still short after that
/// repeats its picks in pick order as duplicate-flagged copies. Each pool
/// entry is claimed by at most one class. Output is grouped by class in
/// label order.
pub fn select_per_class(
    scored: &[ScoredPseudoExample],
    targets: &ClassCounts,
    base: &ClassCounts,
    space: &LabelSpace,
) -> Result<Vec<ScoredPseudoExample>> {
    let mut needs = Vec::with_capacity(space.len());
    for label in space.labels() {
        let y = label.index;
        let (target, floor) = (targets.get(y), base.get(y));
        if target < floor {
            return Err(Error::TargetBelowBase(y));
        }
        needs.push(target - floor);
    }

    let mut claimed = BTreeSet::new();
    let mut picks: Vec<Vec<ScoredPseudoExample>> = Vec::with_capacity(space.len());
    for (y, &need) in needs.iter().enumerate() {
        let mut primary: Vec<usize> = (0..scored.len()).filter(|&i| scored[i].argmax_label == y).collect();
        primary.sort_by(|&a, &b| by_score_then_id(&scored[a], &scored[b]));
        primary.truncate(need);
        claimed.extend(primary.iter().copied());
        picks.push(primary.iter().map(|&i| scored[i].clone()).collect());
    }

    for (y, &need) in needs.iter().enumerate() {
        if picks[y].len() >= need {
            continue;
        }
        let mut rest: Vec<usize> = (0..scored.len()).filter(|i| !claimed.contains(i)).collect();
        rest.sort_by(|&a, &b| {
            let (pa, pb) = (scored[a].distribution.get(y), scored[b].distribution.get(y));
            pb.partial_cmp(&pa)
                .unwrap_or(Ordering::Equal)
                .then_with(|| scored[a].instance_id.cmp(&scored[b].instance_id))
        });
        rest.truncate(need - picks[y].len());
        claimed.extend(rest.iter().copied());
        picks[y].extend(rest.iter().map(|&i| ScoredPseudoExample { override_label: Some(y), ..scored[i].clone() }));
    }

    let mut out = Vec::new();
    for (label, (mut class_picks, &need)) in space.labels().iter().zip(picks.into_iter().zip(&needs)) {
        if need == 0 {
            continue;
        }
        if class_picks.is_empty() {
            return Err(Error::ClassUnfillable { label: label.name.clone(), needed: need });
        }
        let unique = class_picks.len();
        let mut k = 0;
        while class_picks.len() < need {
            class_picks.push(ScoredPseudoExample { duplicate: true, ..class_picks[k % unique].clone() });
            k += 1;
        }
        out.extend(class_picks);
    }
    Ok(out)
}

/// The initial labeled set plus the selected pseudo-labeled entries with
/// their hard labels. Entry ids are resolved against `pool`.
pub fn assemble_training_set(
    initial: &Dataset,
    selected: &[ScoredPseudoExample],
    pool: &UnlabeledPool,
) -> Result<Dataset> {
    let index = pool.index();
    let mut examples = initial.examples.clone();
    examples.reserve(selected.len());
    for s in selected {
        let instance = index.get(s.instance_id.as_str()).ok_or_else(|| {
            Error::InvalidConfig(alloc::vec![alloc::format!("selected id `{}` is not in the pool", s.instance_id)])
        })?;
        let label = initial.space.label(s.label())?.clone();
        examples.push(LabeledExample::new((*instance).clone(), label));
    }
    Ok(Dataset::new(initial.space.clone(), examples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::class_counts;
    use alloc::format;
    use alloc::vec;

    fn dist(p: &[f64]) -> LabelDistribution {
        LabelDistribution::new(p.to_vec()).unwrap()
    }

    struct Fixed(Vec<(String, LabelDistribution)>);

    impl LabelScorer for Fixed {
        fn label_distribution(&self, instance: &Instance) -> Result<LabelDistribution> {
            Ok(self.0.iter().find(|(id, _)| *id == instance.id).unwrap().1.clone())
        }
    }

    fn approx(a: &LabelDistribution, b: &[f64]) {
        for (x, y) in a.probs().iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{:?} vs {:?}", a.probs(), b);
        }
    }

    #[test]
    fn weighted_mean_examples() {
        let p1 = dist(&[0.6, 0.4]);
        let p2 = dist(&[0.2, 0.8]);
        approx(&weighted_mean(&[(1.0, &p1), (1.0, &p2)]).unwrap(), &[0.4, 0.6]);
        approx(&weighted_mean(&[(3.0, &p1), (1.0, &p2)]).unwrap(), &[0.5, 0.5]);
        assert_eq!(weighted_mean(&[]), Err(Error::EmptyEnsemble));
        assert_eq!(weighted_mean(&[(0.0, &p1)]), Err(Error::NonPositiveWeight(0.0)));
    }

    #[test]
    fn pool_labels_match_per_instance_aggregate() {
        let ids = ["c", "a", "b"];
        let m1 = Fixed(vec![
            ("a".into(), dist(&[0.9, 0.1])),
            ("b".into(), dist(&[0.5, 0.5])),
            ("c".into(), dist(&[0.2, 0.8])),
        ]);
        let m2 = Fixed(vec![
            ("a".into(), dist(&[0.7, 0.3])),
            ("b".into(), dist(&[0.5, 0.5])),
            ("c".into(), dist(&[0.4, 0.6])),
        ]);
        let pool = UnlabeledPool::new(ids.iter().map(|id| Instance::new(*id, "t")).collect());
        let members = [(&m1, 1.0), (&m2, 1.0)];
        let scored = label_pool(&members, &pool).unwrap();
        assert_eq!(scored.iter().map(|s| s.instance_id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        approx(&scored[0].distribution, &[0.8, 0.2]);
        assert_eq!(scored[1].argmax_label, 0);
        assert_eq!(scored[2].argmax_label, 1);
        assert!((scored[2].score - 0.7).abs() < 1e-12);

        let single = label_pool(&[(&m1, 2.5)], &pool).unwrap();
        assert_eq!(single[0].distribution, dist(&[0.9, 0.1]));
        assert_eq!(label_pool::<Fixed>(&[], &pool).unwrap_err(), Error::EmptyEnsemble);
        assert_eq!(label_pool(&members, &UnlabeledPool::default()).unwrap_err(), Error::EmptyPool);
    }

    #[test]
    fn growth() {
        let s = GrowthSchedule::new(5, ClassCounts::from_vec(vec![16, 16, 16]), 3).unwrap();
        assert_eq!(growth_targets(&s, 1).unwrap().as_slice(), &[80, 80, 80]);
        assert_eq!(growth_targets(&s, 0).unwrap().as_slice(), &[16, 16, 16]);
        let s = GrowthSchedule::new(5, ClassCounts::from_vec(vec![4, 8]), 2).unwrap();
        assert_eq!(growth_targets(&s, 2).unwrap().as_slice(), &[100, 200]);
        assert!(growth_targets(&s, 3).is_err());
        let huge = GrowthSchedule::new(u64::MAX, ClassCounts::from_vec(vec![2, 2]), 2).unwrap();
        assert_eq!(growth_targets(&huge, 2), Err(Error::GrowthOverflow(2)));
        assert!(GrowthSchedule::new(0, ClassCounts::from_vec(vec![1, 1]), 1).is_err());
    }

    fn entry(id: &str, p: &[f64]) -> ScoredPseudoExample {
        ScoredPseudoExample::new(id, dist(p))
    }

    fn two() -> LabelSpace {
        LabelSpace::new(["A", "B"]).unwrap()
    }

    #[test]
    fn top_scores_per_class() {
        let scored: Vec<_> = (0..10)
            .map(|i| {
                let a = 0.05 + 0.09 * i as f64;
                entry(&format!("e{i}"), &[a, 1.0 - a])
            })
            .collect();
        let sel =
            select_per_class(&scored, &ClassCounts::from_vec(vec![3, 3]), &ClassCounts::from_vec(vec![1, 1]), &two())
                .unwrap();
        let ids: Vec<_> = sel.iter().map(|s| s.instance_id.as_str()).collect();
        assert_eq!(ids, ["e9", "e8", "e0", "e1"]);
        assert!(sel.iter().all(|s| s.override_label.is_none() && !s.duplicate));
    }

    #[test]
    fn fallback_claims_highest_class_probability() {
        let scored = vec![
            entry("a1", &[0.9, 0.1]),
            entry("a2", &[0.8, 0.2]),
            entry("b1", &[0.1, 0.9]),
            entry("b2", &[0.3, 0.7]),
            entry("b3", &[0.45, 0.55]),
            entry("b4", &[0.2, 0.8]),
            entry("b5", &[0.4, 0.6]),
        ];
        let sel =
            select_per_class(&scored, &ClassCounts::from_vec(vec![3, 0]), &ClassCounts::from_vec(vec![0, 0]), &two())
                .unwrap();
        assert_eq!(sel.len(), 3);
        assert_eq!(sel[2].instance_id, "b3");
        assert_eq!(sel[2].override_label, Some(0));
        assert_eq!(sel[2].label(), 0);
    }

    #[test]
    fn duplication_when_candidates_run_out() {
        let scored = vec![entry("only", &[0.6, 0.4])];
        let sel =
            select_per_class(&scored, &ClassCounts::from_vec(vec![2, 0]), &ClassCounts::from_vec(vec![0, 0]), &two())
                .unwrap();
        assert_eq!(sel.len(), 2);
        assert_eq!(sel[0].instance_id, "only");
        assert_eq!(sel[1].instance_id, "only");
        assert!(!sel[0].duplicate && sel[1].duplicate);

        let err =
            select_per_class(&scored, &ClassCounts::from_vec(vec![1, 1]), &ClassCounts::from_vec(vec![0, 0]), &two());
        assert!(matches!(err, Err(Error::ClassUnfillable { ref label, needed: 1 }) if label == "B"));
        assert_eq!(
            select_per_class(&scored, &ClassCounts::from_vec(vec![0, 0]), &ClassCounts::from_vec(vec![1, 0]), &two()),
            Err(Error::TargetBelowBase(0))
        );
    }

    #[test]
    fn assemble_sizes_and_labels() {
        let space = LabelSpace::new(["A", "B", "C"]).unwrap();
        let initial = Dataset::new(
            space.clone(),
            (0..48)
                .map(|i| LabeledExample::new(Instance::new(format!("d{i}"), "t"), space.get(i % 3).unwrap().clone()))
                .collect(),
        );
        let pool = UnlabeledPool::new((0..300).map(|i| Instance::new(format!("p{i:03}"), "u")).collect());
        let scored: Vec<_> = (0..300)
            .map(|i| {
                let mut p = [0.2, 0.2, 0.2];
                p[i % 3] = 0.6;
                entry(&format!("p{i:03}"), &p)
            })
            .collect();
        let base = class_counts(&initial);
        let s = GrowthSchedule::new(5, base.clone(), 1).unwrap();
        let targets = growth_targets(&s, 1).unwrap();
        let sel = select_per_class(&scored, &targets, &base, &space).unwrap();
        let d1 = assemble_training_set(&initial, &sel, &pool).unwrap();
        assert_eq!(d1.len(), 240);
        assert_eq!(class_counts(&d1), targets);

        assert_eq!(assemble_training_set(&initial, &[], &pool).unwrap(), initial);

        let dup = vec![
            entry("p000", &[0.6, 0.2, 0.2]),
            ScoredPseudoExample { duplicate: true, ..entry("p000", &[0.6, 0.2, 0.2]) },
        ];
        let d = assemble_training_set(&initial, &dup, &pool).unwrap();
        assert_eq!(d.ids().filter(|id| *id == "p000").count(), 2);
    }
}
