use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    Stratified,
    Grouped,
    /// Unstratified shuffled folds, for regression targets.
    Kfold,
    Predefined,
}

/// Partition labels of a predefined plan.
pub const SPLIT_TRAIN: usize = 0;
pub const SPLIT_VALID: usize = 1;
pub const SPLIT_TEST: usize = 2;
pub const SPLIT_NAMES: [&str; 3] = ["train", "valid", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub kind: PlanKind,
    pub k: usize,
    pub seed: u64,
    /// Fold of every sample; for predefined plans one of the `SPLIT_*` values.
    pub assignments: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// One outer evaluation: rows to fit on, rows to score, and an optional
/// fixed model-selection split given as positions within `train`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterFold {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub selection: Option<(Vec<usize>, Vec<usize>)>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Cross-validation folds, or the single train+valid / test evaluation
    /// of a predefined plan (selection on train -> valid when valid is nonempty).
    pub fn outer_folds(&self) -> Vec<OuterFold> {
        match self.kind {
            PlanKind::Predefined => {
                let fit = self.members(SPLIT_TRAIN);
                let valid = self.members(SPLIT_VALID);
                let mut train = fit.clone();
                train.extend(&valid);
                let selection = (!valid.is_empty()).then(|| ((0..fit.len()).collect(), (fit.len()..train.len()).collect()));
                vec![OuterFold { fold: 0, train, test: self.members(SPLIT_TEST), selection }]
            }
            _ => (0..self.k)
                .map(|f| OuterFold {
                    fold: f,
                    train: (0..self.len()).filter(|&i| self.assignments[i] != f).collect(),
                    test: self.members(f),
                    selection: None,
                })
                .collect(),
        }
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 2 || k > n {
        return Err(EvalError::InvalidK { k, n });
    }
    Ok(())
}

/// Shuffles each class (classes ascending) and deals it round-robin, the
/// dealing position carrying over from one class to the next. Every fold
/// then holds floor or ceil of `n_c / k` members of each class.
pub fn stratified_kfold(labels: &[u32], k: usize, seed: u64) -> Result<FoldPlan> {
    check_k(k, labels.len())?;
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; labels.len()];
    let mut warnings = Vec::new();
    let mut next = 0usize;
    for (class, mut members) in by_class {
        if members.len() < k {
            let w = format!("class {class} has {} members, fewer than {k} folds", members.len());
            log::warn!("{w}");
            warnings.push(w);
        }
        members.shuffle(&mut rng);
        for i in members {
            assignments[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan { kind: PlanKind::Stratified, k, seed, assignments, warnings })
}

/// Shuffled round-robin folds ignoring targets.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    check_k(k, n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n];
    for (pos, i) in order.into_iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan { kind: PlanKind::Kfold, k, seed, assignments, warnings: Vec::new() })
}

/// Whole groups to folds: groups shuffled, stably sorted by size
/// (largest first), each placed in the currently smallest fold.
pub fn grouped_kfold<G: Ord + Clone>(groups: &[G], k: usize, seed: u64) -> Result<FoldPlan> {
    let mut members: BTreeMap<G, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g.clone()).or_default().push(i);
    }
    if k < 2 {
        return Err(EvalError::InvalidK { k, n: groups.len() });
    }
    if members.len() < k {
        return Err(EvalError::TooFewGroups { groups: members.len(), k });
    }
    let mut order: Vec<Vec<usize>> = members.into_values().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by(|a, b| b.len().cmp(&a.len()));
    let mut sizes = vec![0usize; k];
    let mut assignments = vec![0; groups.len()];
    for g in order {
        let fold = (0..k).min_by_key(|&f| (sizes[f], f)).expect("k >= 2");
        sizes[fold] += g.len();
        for i in g {
            assignments[i] = fold;
        }
    }
    Ok(FoldPlan { kind: PlanKind::Grouped, k, seed, assignments, warnings: Vec::new() })
}

/// Declared train / valid / test assignment.
pub fn predefined_split<S: AsRef<str>>(splits: &[S]) -> Result<FoldPlan> {
    let mut assignments = Vec::with_capacity(splits.len());
    for (row, s) in splits.iter().enumerate() {
        let s = s.as_ref().trim();
        match SPLIT_NAMES.iter().position(|&n| n == s) {
            Some(p) => assignments.push(p),
            None => return Err(EvalError::InvalidSplit { row, value: s.to_string(), accepted: SPLIT_NAMES.join(", ") }),
        }
    }
    let plan = FoldPlan { kind: PlanKind::Predefined, k: 3, seed: 0, assignments, warnings: Vec::new() };
    let sizes = plan.fold_sizes();
    if sizes[SPLIT_TRAIN] == 0 || sizes[SPLIT_TEST] == 0 {
        return Err(EvalError::MissingSplit);
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_counts(plan: &FoldPlan, labels: &[u32], fold: usize, class: u32) -> usize {
        plan.members(fold).iter().filter(|&&i| labels[i] == class).count()
    }

    #[test]
    fn balanced_classes_split_exactly() {
        let labels: Vec<u32> = (0..100).map(|i| (i % 2) as u32).collect();
        let plan = stratified_kfold(&labels, 10, 3).unwrap();
        for f in 0..10 {
            assert_eq!(class_counts(&plan, &labels, f, 0), 5);
            assert_eq!(class_counts(&plan, &labels, f, 1), 5);
        }
        assert_eq!(plan, stratified_kfold(&labels, 10, 3).unwrap());
        assert_ne!(plan.assignments, stratified_kfold(&labels, 10, 4).unwrap().assignments);
    }

    #[test]
    fn uneven_classes_within_one() {
        let labels: Vec<u32> = (0..103).map(|i| if i < 50 { 0 } else if i < 83 { 1 } else { 2 }).collect();
        let plan = stratified_kfold(&labels, 10, 11).unwrap();
        for (class, n) in [(0u32, 50.0), (1, 33.0), (2, 20.0)] {
            for f in 0..10 {
                let c = class_counts(&plan, &labels, f, class) as f64;
                assert!((c - n / 10.0).abs() <= 1.0);
            }
        }
        let sizes = plan.fold_sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn small_class_warns() {
        let labels = [0, 0, 0, 1, 1, 1, 1, 2];
        let plan = stratified_kfold(&labels, 3, 0).unwrap();
        assert_eq!(plan.warnings.len(), 1);
        assert!(matches!(stratified_kfold(&labels, 1, 0), Err(EvalError::InvalidK { .. })));
        assert!(matches!(stratified_kfold(&labels, 9, 0), Err(EvalError::InvalidK { .. })));
    }

    #[test]
    fn greedy_group_packing() {
        let mut groups = Vec::new();
        for (g, n) in [("a", 9), ("b", 5), ("c", 5), ("d", 1)] {
            groups.extend(std::iter::repeat_n(g, n));
        }
        let plan = grouped_kfold(&groups, 2, 7).unwrap();
        assert_eq!(plan.fold_sizes(), vec![10, 10]);
        let ten: Vec<u32> = (0..50).map(|i| i / 5).collect();
        let plan = grouped_kfold(&ten, 10, 1).unwrap();
        assert_eq!(plan.fold_sizes(), vec![5; 10]);
        assert!(matches!(grouped_kfold(&[1, 1, 2], 3, 0), Err(EvalError::TooFewGroups { groups: 2, k: 3 })));
    }

    #[test]
    fn predefined_partitions() {
        let s = ["train", "train", "valid", "test", "train", "test"];
        let plan = predefined_split(&s).unwrap();
        assert_eq!(plan.fold_sizes(), vec![3, 1, 2]);
        let outer = plan.outer_folds();
        assert_eq!(outer.len(), 1);
        assert_eq!(outer[0].train, vec![0, 1, 4, 2]);
        assert_eq!(outer[0].test, vec![3, 5]);
        assert_eq!(outer[0].selection, Some((vec![0, 1, 2], vec![3])));
        let err = predefined_split(&["train", "dev"]).unwrap_err();
        assert!(err.to_string().contains("train, valid, test"));
        assert!(matches!(predefined_split(&["train", "valid"]), Err(EvalError::MissingSplit)));
    }

    #[test]
    fn kfold_covers_every_sample_once() {
        let plan = kfold(23, 5, 2).unwrap();
        let sizes = plan.fold_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
        for f in plan.outer_folds() {
            assert_eq!(f.train.len() + f.test.len(), 23);
            assert!(f.test.iter().all(|i| !f.train.contains(i)));
        }
    }
}
