//! Frequency-ordered cascades of binary decisions.
//!
//! Stage `i` separates `ordered_classes[i]` from every class after it, so
//! each stage sees one class fewer than the one before. Class probabilities
//! are recovered by chaining the stage outputs:
//! `P(c_i) = p_i * prod_{j<i} (1 - p_j)`, with the last class taking the
//! remaining mass.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::labels_by_frequency;
use crate::features::LabelEncoder;
use crate::train::Example;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CascadeError {
    #[error("a cascade needs at least two classes")]
    SingleClass,
    #[error("stage {0} has no rows on one side")]
    EmptyStage(usize),
    #[error("stage probability {0} is outside [0, 1]")]
    OutOfRangeProbability(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub index: usize,
    pub positive_class: String,
    pub negative_set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadePlan {
    pub ordered_classes: Vec<String>,
    pub stages: Vec<StageSpec>,
}

impl CascadePlan {
    pub fn from_order(ordered_classes: Vec<String>) -> Result<Self, CascadeError> {
        if ordered_classes.len() < 2 {
            return Err(CascadeError::SingleClass);
        }
        let stages = (0..ordered_classes.len() - 1)
            .map(|i| StageSpec {
                index: i,
                positive_class: ordered_classes[i].clone(),
                negative_set: ordered_classes[i + 1..].to_vec(),
            })
            .collect();
        Ok(CascadePlan {
            ordered_classes,
            stages,
        })
    }
}

/// Orders classes by descending count (ascending label on ties) and peels
/// them off one stage at a time.
pub fn build_cascade_plan(class_counts: &BTreeMap<String, usize>) -> Result<CascadePlan, CascadeError> {
    CascadePlan::from_order(labels_by_frequency(class_counts))
}

/// Rows eligible for `stage`, relabelled 1 for the positive class and 0 for
/// the rest. Rows of classes peeled off by earlier stages are dropped.
pub fn stage_subset(rows: &[Example], stage: &StageSpec, encoder: &LabelEncoder) -> Result<Vec<Example>, CascadeError> {
    let positive = encoder.index(&stage.positive_class);
    let negatives: Vec<usize> = stage.negative_set.iter().filter_map(|l| encoder.index(l)).collect();
    let subset: Vec<Example> = rows
        .iter()
        .filter_map(|ex| {
            let label = if Some(ex.label) == positive {
                1
            } else if negatives.contains(&ex.label) {
                0
            } else {
                return None;
            };
            Some(Example {
                features: ex.features.clone(),
                label,
            })
        })
        .collect();
    let pos = subset.iter().filter(|e| e.label == 1).count();
    if pos == 0 || pos == subset.len() {
        return Err(CascadeError::EmptyStage(stage.index));
    }
    Ok(subset)
}

/// Turns `K - 1` stage-positive probabilities into a distribution over the
/// plan's `K` ordered classes.
pub fn compose_distribution(stage_positives: &[f64]) -> Result<Vec<f64>, CascadeError> {
    let mut out = Vec::with_capacity(stage_positives.len() + 1);
    let mut remaining = 1.0;
    for &p in stage_positives {
        if !(0.0..=1.0).contains(&p) {
            return Err(CascadeError::OutOfRangeProbability(p));
        }
        out.push(p * remaining);
        remaining *= 1.0 - p;
    }
    out.push(remaining);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{encode_labels, SparseVector};
    use proptest::prelude::*;

    fn counts(spec: &[(&str, usize)]) -> BTreeMap<String, usize> {
        spec.iter().map(|(l, n)| (l.to_string(), *n)).collect()
    }

    #[test]
    fn plan_for_three_classes() {
        let plan = build_cascade_plan(&counts(&[("tech", 20), ("news", 50), ("sports", 30)])).unwrap();
        assert_eq!(plan.ordered_classes, ["news", "sports", "tech"]);
        assert_eq!(plan.stages.len(), 2);
        assert_eq!(plan.stages[0].positive_class, "news");
        assert_eq!(plan.stages[0].negative_set, ["sports", "tech"]);
        assert_eq!(plan.stages[1].positive_class, "sports");
        assert_eq!(plan.stages[1].negative_set, ["tech"]);
    }

    #[test]
    fn plan_edge_cases() {
        assert_eq!(
            build_cascade_plan(&counts(&[("a", 1), ("b", 9)])).unwrap().stages.len(),
            1
        );
        let tied = build_cascade_plan(&counts(&[("c", 5), ("a", 5), ("b", 5)])).unwrap();
        assert_eq!(tied.ordered_classes, ["a", "b", "c"]);
        assert_eq!(build_cascade_plan(&counts(&[("a", 3)])), Err(CascadeError::SingleClass));
    }

    #[test]
    fn plan_shrinks_by_one_class_per_stage() {
        let plan = build_cascade_plan(&counts(&[("a", 9), ("b", 7), ("c", 5), ("d", 3), ("e", 1)])).unwrap();
        for w in plan.stages.windows(2) {
            assert_eq!(w[0].negative_set.len(), w[1].negative_set.len() + 1);
            assert!(!w[0].negative_set.contains(&w[0].positive_class));
        }
        assert_eq!(plan.stages.last().unwrap().negative_set.len(), 1);
    }

    fn examples(spec: &[(&str, usize)]) -> (Vec<Example>, LabelEncoder) {
        let labels: Vec<&str> = spec.iter().flat_map(|(l, n)| std::iter::repeat_n(*l, *n)).collect();
        let enc = encode_labels(labels.iter().copied()).unwrap();
        let rows = labels
            .iter()
            .map(|l| Example {
                features: SparseVector::zero(4),
                label: enc.index(l).unwrap(),
            })
            .collect();
        (rows, enc)
    }

    #[test]
    fn stage_subsets() {
        let (rows, enc) = examples(&[("a", 50), ("b", 30), ("c", 20)]);
        let plan = CascadePlan::from_order(enc.labels().to_vec()).unwrap();
        let s0 = stage_subset(&rows, &plan.stages[0], &enc).unwrap();
        assert_eq!(s0.len(), 100);
        assert_eq!(s0.iter().filter(|e| e.label == 1).count(), 50);
        let s1 = stage_subset(&rows, &plan.stages[1], &enc).unwrap();
        assert_eq!(s1.len(), 50);
        assert_eq!(s1.iter().filter(|e| e.label == 1).count(), 30);

        let (rows, enc) = examples(&[("a", 5), ("b", 5)]);
        let only_a: Vec<Example> = rows.into_iter().filter(|e| e.label == 0).collect();
        let plan = CascadePlan::from_order(enc.labels().to_vec()).unwrap();
        assert_eq!(
            stage_subset(&only_a, &plan.stages[0], &enc),
            Err(CascadeError::EmptyStage(0))
        );
    }

    #[test]
    fn composition_examples() {
        let d = compose_distribution(&[0.2, 0.7]).unwrap();
        for (got, want) in d.iter().zip([0.2, 0.56, 0.24]) {
            assert!((got - want).abs() <= 1e-15, "{d:?}");
        }
        assert_eq!(compose_distribution(&[1.0, 0.3]).unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(compose_distribution(&[0.0, 0.0]).unwrap(), [0.0, 0.0, 1.0]);
        assert_eq!(
            compose_distribution(&[0.5, 1.5]),
            Err(CascadeError::OutOfRangeProbability(1.5))
        );
        assert!(compose_distribution(&[f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn composition_is_a_distribution(p in proptest::collection::vec(0.0f64..=1.0, 1..8)) {
            let d = compose_distribution(&p).unwrap();
            prop_assert_eq!(d.len(), p.len() + 1);
            prop_assert!(d.iter().all(|x| *x >= 0.0));
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
