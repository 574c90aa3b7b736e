//! Accuracy and macro-F1.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Label, LabelSpace};
use crate::error::{Error, Result};

/// How classes with neither gold support nor predictions enter the macro
/// mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentClassPolicy {
    /// Count them with F1 = 0.
    #[default]
    Include,
    /// Leave them out of the mean.
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub n: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores label-index predictions against gold label indices.
pub fn evaluate_indices(
    predictions: &[usize],
    gold: &[usize],
    space: &LabelSpace,
    policy: AbsentClassPolicy,
) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch { predictions: predictions.len(), gold: gold.len() });
    }
    if gold.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let k = space.len();
    if let Some(&bad) = predictions.iter().chain(gold).find(|&&i| i >= k) {
        return Err(Error::LabelOutOfSpace(bad));
    }
    let mut tp = alloc::vec![0usize; k];
    let mut support = alloc::vec![0usize; k];
    let mut predicted = alloc::vec![0usize; k];
    let mut correct = 0;
    for (&p, &g) in predictions.iter().zip(gold) {
        support[g] += 1;
        predicted[p] += 1;
        if p == g {
            tp[g] += 1;
            correct += 1;
        }
    }
    let per_class: Vec<ClassMetrics> = space
        .labels()
        .iter()
        .map(|label| {
            let y = label.index;
            let precision = ratio(tp[y], predicted[y]);
            let recall = ratio(tp[y], support[y]);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassMetrics { label: label.clone(), precision, recall, f1, support: support[y], predicted: predicted[y] }
        })
        .collect();
    let counted: Vec<f64> = per_class
        .iter()
        .filter(|c| policy == AbsentClassPolicy::Include || c.support > 0 || c.predicted > 0)
        .map(|c| c.f1)
        .collect();
    let macro_f1 = if counted.is_empty() { 0.0 } else { counted.iter().sum::<f64>() / counted.len() as f64 };
    Ok(EvalReport { accuracy: ratio(correct, gold.len()), macro_f1, per_class, n: gold.len() })
}

/// Scores predicted labels against gold labels with the default policy.
pub fn evaluate(predictions: &[Label], gold: &[Label], space: &LabelSpace) -> Result<EvalReport> {
    let p: Vec<usize> = predictions.iter().map(|l| l.index).collect();
    let g: Vec<usize> = gold.iter().map(|l| l.index).collect();
    evaluate_indices(&p, &g, space, AbsentClassPolicy::Include)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two() -> LabelSpace {
        LabelSpace::new(["A", "B"]).unwrap()
    }

    #[test]
    fn hand_computed_report() {
        // A: tp 1, predicted 1, support 2 -> P 1, R 0.5, F1 2/3
        // B: tp 2, predicted 3, support 2 -> P 2/3, R 1, F1 0.8
        let r = evaluate_indices(&[0, 1, 1, 1], &[0, 0, 1, 1], &two(), AbsentClassPolicy::Include).unwrap();
        assert!((r.accuracy - 0.75).abs() < 1e-12);
        assert!((r.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class[1].f1 - 0.8).abs() < 1e-12);
        assert!((r.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert_eq!(r.per_class.iter().map(|c| c.support).sum::<usize>(), r.n);
    }

    #[test]
    fn perfect_and_degenerate() {
        let r = evaluate_indices(&[0, 1, 0, 1], &[0, 1, 0, 1], &two(), AbsentClassPolicy::Include).unwrap();
        assert_eq!((r.accuracy, r.macro_f1), (1.0, 1.0));
        let r = evaluate_indices(&[0, 0, 0, 0], &[0, 0, 1, 1], &two(), AbsentClassPolicy::Include).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_policy() {
        let s = LabelSpace::new(["A", "B", "C"]).unwrap();
        let inc = evaluate_indices(&[0, 1], &[0, 1], &s, AbsentClassPolicy::Include).unwrap();
        assert!((inc.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
        let exc = evaluate_indices(&[0, 1], &[0, 1], &s, AbsentClassPolicy::Exclude).unwrap();
        assert_eq!(exc.macro_f1, 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            evaluate_indices(&[0], &[0, 1], &two(), AbsentClassPolicy::Include),
            Err(Error::LengthMismatch { predictions: 1, gold: 2 })
        );
        assert_eq!(evaluate_indices(&[], &[], &two(), AbsentClassPolicy::Include), Err(Error::EmptyEvaluation));
        assert!(evaluate_indices(&[5], &[0], &two(), AbsentClassPolicy::Include).is_err());
    }

    #[test]
    fn label_wrapper_matches_indices() {
        let s = two();
        let l = |i: usize| s.get(i).unwrap().clone();
        let r = evaluate(&[l(0), l(1), l(1), l(1)], &[l(0), l(0), l(1), l(1)], &s).unwrap();
        assert!((r.accuracy - 0.75).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn permutation_and_relabel_invariance(
            pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..60),
            rot in 0usize..3,
        ) {
            let s = LabelSpace::new(["A", "B", "C"]).unwrap();
            let (p, g): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let base = evaluate_indices(&p, &g, &s, AbsentClassPolicy::Include).unwrap();

            let mut rev = pairs.clone();
            rev.reverse();
            let (rp, rg): (Vec<usize>, Vec<usize>) = rev.into_iter().unzip();
            let shuffled = evaluate_indices(&rp, &rg, &s, AbsentClassPolicy::Include).unwrap();
            prop_assert_eq!(base.accuracy, shuffled.accuracy);
            prop_assert!((base.macro_f1 - shuffled.macro_f1).abs() < 1e-12);

            let map = |i: usize| (i + rot) % 3;
            let mp: Vec<usize> = p.iter().map(|&i| map(i)).collect();
            let mg: Vec<usize> = g.iter().map(|&i| map(i)).collect();
            let relabeled = evaluate_indices(&mp, &mg, &s, AbsentClassPolicy::Include).unwrap();
            prop_assert_eq!(base.accuracy, relabeled.accuracy);
            prop_assert!((base.macro_f1 - relabeled.macro_f1).abs() < 1e-12);
            for c in &base.per_class {
                prop_assert_eq!(c.f1, relabeled.per_class[map(c.label.index)].f1);
            }

            prop_assert!(base.macro_f1 <= 1.0 && base.macro_f1 >= 0.0);
            let all_classes = (0..3).all(|c| g.contains(&c));
            if all_classes {
                prop_assert_eq!(base.macro_f1 == 1.0, p == g);
            }
        }
    }
}
