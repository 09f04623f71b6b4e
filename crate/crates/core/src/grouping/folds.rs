use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::{GroupingError, Result};

/// Assignment of whole groups to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupedFoldPlan {
    pub n_folds: usize,
    /// Fold index per group label.
    pub group_fold: Vec<usize>,
    /// Fold index per sample, derived from the sample's group.
    pub sample_fold: Vec<usize>,
}

impl GroupedFoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.sample_fold.len())
            .filter(|&i| self.sample_fold[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.sample_fold.len())
            .filter(|&i| self.sample_fold[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.sample_fold {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Randomly assigns groups to folds. Groups are visited in shuffled order
/// and each goes to the fold currently holding the fewest samples (lowest
/// fold index on ties), so with as many groups as folds the result is a
/// random bijection and with more groups the sample counts stay balanced.
pub fn make_fold_plan<R: Rng + ?Sized>(
    sample_groups: &[usize],
    n_groups: usize,
    n_folds: usize,
    rng: &mut R,
) -> Result<GroupedFoldPlan> {
    if n_folds < 2 {
        return Err(GroupingError::Config(format!(
            "need at least 2 folds, got {n_folds}"
        )));
    }
    if n_groups == 0 {
        return Err(GroupingError::TooFewItems {
            needed: 1,
            found: 0,
        });
    }
    let mut group_size = vec![0usize; n_groups];
    for &g in sample_groups {
        if g >= n_groups {
            return Err(GroupingError::Config(format!(
                "sample group {g} out of range 0..{n_groups}"
            )));
        }
        group_size[g] += 1;
    }
    let mut order: Vec<usize> = (0..n_groups).collect();
    order.shuffle(rng);
    let mut load = vec![0usize; n_folds];
    let mut group_fold = vec![0usize; n_groups];
    for g in order {
        let fold = (0..n_folds)
            .min_by_key(|&f| (load[f], f))
            .expect("n_folds >= 2");
        group_fold[g] = fold;
        // empty groups still occupy a slot so that every fold gets a group
        load[fold] += group_size[g].max(1);
    }
    let sample_fold = sample_groups.iter().map(|&g| group_fold[g]).collect();
    Ok(GroupedFoldPlan {
        n_folds,
        group_fold,
        sample_fold,
    })
}
