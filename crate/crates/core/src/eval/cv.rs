//! Stratified k-fold assignment.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A complete partition of samples into `k` folds, stratified by class:
/// per-class fold counts differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvSplit {
    fold_assignments: Vec<usize>,
    k: usize,
}

impl CvSplit {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.fold_assignments
    }

    pub fn fold_of(&self, sample: usize) -> usize {
        self.fold_assignments[sample]
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_assignments.len())
            .filter(|&i| self.fold_assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_assignments.len())
            .filter(|&i| self.fold_assignments[i] != fold)
            .collect()
    }
}

/// Assign each sample to one of `k` folds: classes are visited in ascending
/// label order, each class's indices are shuffled by a single sequential
/// generator seeded from `seed`, and then dealt round-robin (position `i`
/// to fold `i % k`). Earlier folds therefore receive the remainder samples,
/// and per-class fold counts differ by at most one.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<CvSplit> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs at least 2 folds, got {k}"
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument(
            "cross-validation needs a non-empty label vector".into(),
        ));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    for (&class, members) in &by_class {
        if members.len() < k {
            return Err(Error::Data(format!(
                "class {class} has {} samples, fewer than the {k} folds",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_assignments = vec![0usize; labels.len()];
    for members in by_class.into_values() {
        let mut shuffled = members;
        shuffled.shuffle(&mut rng);
        for (pos, idx) in shuffled.into_iter().enumerate() {
            fold_assignments[idx] = pos % k;
        }
    }
    Ok(CvSplit {
        fold_assignments,
        k,
    })
}
