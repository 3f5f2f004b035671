use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CohortError;

/// Index sets of one cross-validation fold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions `0..labels.len()` into `k` folds with per-class counts within
/// one sample of `count(class) / k`.
///
/// Each class is shuffled independently and dealt round-robin; the dealing
/// position carries over between classes so fold sizes stay balanced too.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, CohortError> {
    if k < 2 {
        return Err(CohortError::Validation(format!("k must be at least 2, got {k}")));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(CohortError::Validation(format!(
                "class {class} has {} samples, fewer than k = {k}",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut cursor = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[cursor % k].push(i);
            cursor += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Stratified train/validation/test splits, one per fold.
///
/// Fold `i` is the test set. For `k ≥ 3` fold `i + 1 (mod k)` is the
/// validation set and the rest is training data. With `k = 2` there is only
/// one other fold, so a stratified quarter of it is held out for validation.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<FoldSplit>, CohortError> {
    let folds = stratified_folds(labels, k, seed)?;
    let mut splits = Vec::with_capacity(k);
    for i in 0..k {
        let test = folds[i].clone();
        let (train, validation) = if k >= 3 {
            let v = (i + 1) % k;
            let train = (0..k)
                .filter(|&j| j != i && j != v)
                .flat_map(|j| folds[j].iter().copied())
                .collect::<Vec<_>>();
            (sorted(train), folds[v].clone())
        } else {
            let pool = &folds[1 - i];
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64 + 1));
            holdout_quarter(pool, labels, &mut rng)
        };
        splits.push(FoldSplit {
            train,
            validation,
            test,
        });
    }
    Ok(splits)
}

fn holdout_quarter<R: Rng>(pool: &[usize], labels: &[usize], rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let classes = pool.iter().map(|&i| labels[i]).max().map_or(0, |m| m + 1);
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for class in 0..classes {
        let mut members: Vec<usize> = pool.iter().copied().filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        let held = members.len().div_ceil(4).min(members.len().saturating_sub(1));
        validation.extend_from_slice(&members[..held]);
        train.extend_from_slice(&members[held..]);
    }
    (sorted(train), sorted(validation))
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}
