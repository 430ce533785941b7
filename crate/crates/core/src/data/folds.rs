//! Subject-independent k-fold planning.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub test_subjects: Vec<u32>,
    /// Sample indices, ascending.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }
}

/// Shuffles the distinct subjects with `seed` and deals them round-robin
/// into `k` folds. `subjects[i]` is the subject of sample `i`.
///
/// With `k == 1` the single fold tests on every subject and its training
/// set is empty.
pub fn plan_folds(subjects: &[u32], k: usize, seed: u64) -> Result<FoldPlan> {
    let mut distinct: Vec<u32> = subjects.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if k == 0 || distinct.len() < k {
        return Err(Error::invalid(
            "plan_folds",
            format!("cannot split {} subjects into {k} folds", distinct.len()),
        ));
    }
    distinct.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let folds = (0..k)
        .map(|f| {
            let mut test_subjects: Vec<u32> = distinct.iter().copied().skip(f).step_by(k).collect();
            test_subjects.sort_unstable();
            let (test, train) = (0..subjects.len()).partition(|&i| test_subjects.binary_search(&subjects[i]).is_ok());
            Fold {
                test_subjects,
                train,
                test,
            }
        })
        .collect();
    Ok(FoldPlan { folds })
}
