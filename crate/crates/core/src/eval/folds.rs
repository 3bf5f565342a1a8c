use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvalError;

/// Which side of a fold split is used for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldOrientation {
    /// Train on k-1 folds, test on the held-out fold.
    #[default]
    Standard,
    /// Train on one fold, test on the other k-1.
    PaperLiteral,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    folds: Vec<usize>,
    k: usize,
    seed: u64,
}

/// Shuffles `0..n` with a seeded ChaCha8 stream and deals the shuffled
/// indices round-robin into `k` folds.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    if k < 2 || k > n {
        return Err(EvalError::InvalidFoldCount { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (position, &index) in order.iter().enumerate() {
        folds[index] = position % k;
    }
    Ok(FoldAssignment { folds, k, seed })
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn fold_of(&self, index: usize) -> usize {
        self.folds[index]
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len())
            .filter(|&i| self.folds[i] == fold)
            .collect()
    }

    /// `(train, test)` index lists for one rotation.
    pub fn split(&self, fold: usize, orientation: FoldOrientation) -> (Vec<usize>, Vec<usize>) {
        let (inside, outside): (Vec<usize>, Vec<usize>) =
            (0..self.folds.len()).partition(|&i| self.folds[i] == fold);
        match orientation {
            FoldOrientation::Standard => (outside, inside),
            FoldOrientation::PaperLiteral => (inside, outside),
        }
    }

    /// Hex SHA-256 over the fold vector, for checking that two runs used
    /// the same partition.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.k as u64).to_le_bytes());
        for &f in &self.folds {
            h.update((f as u64).to_le_bytes());
        }
        format!("{:x}", h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_into_ten() {
        let f = kfold_split(10, 10, 1).unwrap();
        assert_eq!(f.fold_sizes(), vec![1; 10]);
    }

    #[test]
    fn eleven_into_ten() {
        let mut sizes = kfold_split(11, 10, 1).unwrap().fold_sizes();
        sizes.sort();
        assert_eq!(sizes, [vec![1; 9], vec![2]].concat());
    }

    #[test]
    fn same_seed_same_assignment() {
        assert_eq!(
            kfold_split(57, 10, 42).unwrap(),
            kfold_split(57, 10, 42).unwrap()
        );
        assert_ne!(
            kfold_split(57, 10, 42).unwrap().folds,
            kfold_split(57, 10, 43).unwrap().folds
        );
    }

    #[test]
    fn invalid_k() {
        assert!(kfold_split(5, 1, 0).is_err());
        assert!(kfold_split(5, 6, 0).is_err());
        assert!(kfold_split(5, 5, 0).is_ok());
    }

    #[test]
    fn orientations_swap_sides() {
        let f = kfold_split(20, 4, 3).unwrap();
        let (train, test) = f.split(2, FoldOrientation::Standard);
        let (train2, test2) = f.split(2, FoldOrientation::PaperLiteral);
        assert_eq!((train.len(), test.len()), (15, 5));
        assert_eq!((train2, test2), (test, train));
    }

    proptest! {
        #[test]
        fn folds_partition_evenly(n in 2usize..300, k_frac in 0.0f64..1.0, seed: u64) {
            let k = 2 + ((n - 2) as f64 * k_frac) as usize;
            let f = kfold_split(n, k, seed).unwrap();
            let sizes = f.fold_sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all: Vec<usize> = (0..k).flat_map(|i| f.members(i)).collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
