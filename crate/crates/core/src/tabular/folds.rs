use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

/// Partition of `n` rows into `k` folds for cross-fitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    k: usize,
    fold_of: Vec<usize>,
}

/// Uniformly random balanced partition; fold sizes differ by at most one.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return input(format!("fold count must be at least 2, got {k}"));
    }
    if k > n {
        return input(format!("fold count {k} exceeds row count {n}"));
    }
    let mut fold_of: Vec<usize> = (0..n).map(|i| i % k).collect();
    fold_of.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(FoldAssignment { k, fold_of })
}

impl FoldAssignment {
    /// Single fold covering every row, so nuisance models are fit and
    /// evaluated in-sample. Only meaningful for exact-algebra checks; never
    /// use it for production training.
    pub fn full_sample(n: usize) -> Self {
        Self {
            k: 1,
            fold_of: vec![0; n],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_rows(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_of(&self, row: usize) -> usize {
        self.fold_of[row]
    }

    pub fn is_cross_fitted(&self) -> bool {
        self.k > 1
    }

    pub fn held_out_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&r| self.fold_of[r] == fold).collect()
    }

    /// Rows the model for `fold` is trained on: every other fold, or all rows
    /// in full-sample mode.
    pub fn training_rows(&self, fold: usize) -> Vec<usize> {
        if !self.is_cross_fitted() {
            return (0..self.n_rows()).collect();
        }
        (0..self.n_rows()).filter(|&r| self.fold_of[r] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_row_per_fold() {
        let f = assign_folds(10, 10, 3).unwrap();
        assert_eq!(f.sizes(), vec![1; 10]);
    }

    #[test]
    fn seven_into_three() {
        let mut sizes = assign_folds(7, 3, 11).unwrap().sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3]);
    }

    #[test]
    fn deterministic() {
        assert_eq!(assign_folds(5000, 10, 42).unwrap(), assign_folds(5000, 10, 42).unwrap());
        assert_ne!(assign_folds(5000, 10, 42).unwrap(), assign_folds(5000, 10, 43).unwrap());
    }

    #[test]
    fn bad_k() {
        assert!(assign_folds(5, 6, 0).is_err());
        assert!(assign_folds(5, 1, 0).is_err());
    }

    #[test]
    fn complement_excludes_fold() {
        let f = assign_folds(20, 4, 1).unwrap();
        for k in 0..4 {
            assert!(f.training_rows(k).iter().all(|&r| f.fold_of(r) != k));
            assert_eq!(f.training_rows(k).len() + f.held_out_rows(k).len(), 20);
        }
    }

    proptest! {
        #[test]
        fn balanced(n in 2usize..400, k in 2usize..20, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let f = assign_folds(n, k, seed).unwrap();
            let s = f.sizes();
            prop_assert_eq!(s.iter().sum::<usize>(), n);
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
        }
    }
}
