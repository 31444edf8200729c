use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Fold index for every sample, addressed by sample position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    k: usize,
    folds: Vec<usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn fold_of(&self, sample: usize) -> usize {
        self.folds[sample]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.folds
    }

    /// Ascending sample indices belonging to `fold`.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Ascending sample indices whose fold is in `folds`.
    pub fn members_of(&self, folds: &[usize]) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(_, f)| folds.contains(f))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Deals each class round-robin over the folds after a seeded shuffle.
///
/// Every fold gets `floor` or `ceil` of its proportional share of each class.
/// The negative class continues the rotation where the positives stopped, so
/// fold sizes also differ by at most one.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<FoldAssignment, CorpusError> {
    if k < 2 {
        return Err(CorpusError::InvalidFoldCount(k));
    }
    let mut positives: Vec<usize> = Vec::new();
    let mut negatives: Vec<usize> = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if y {
            positives.push(i);
        } else {
            negatives.push(i);
        }
    }
    for (class, members) in [(1u8, &positives), (0u8, &negatives)] {
        if members.len() < k {
            return Err(CorpusError::InsufficientClassSize {
                class,
                count: members.len(),
                k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);

    let mut folds = vec![0usize; labels.len()];
    for (r, &i) in positives.iter().enumerate() {
        folds[i] = r % k;
    }
    let offset = positives.len() % k;
    for (r, &i) in negatives.iter().enumerate() {
        folds[i] = (offset + r) % k;
    }
    Ok(FoldAssignment { k, folds })
}

/// Seeded stratified subsample of `indices` keeping `round(fraction · n_c)`
/// of each class (at least one when the class is present and fraction > 0).
/// The result is sorted ascending, so `fraction = 1.0` returns `indices` sorted.
pub fn stratified_subsample(indices: &[usize], labels: &[bool], fraction: f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for class in [true, false] {
        let mut members: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        let keep = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len());
        if keep < members.len() {
            members.shuffle(&mut rng);
            members.truncate(keep);
        }
        out.extend(members);
    }
    out.sort_unstable();
    out
}
