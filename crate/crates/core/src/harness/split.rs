//! Stratified fold assignment and hold-out splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

/// Trial-to-fold assignment of a k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }
}

/// Trial indices of each class, in index order.
pub fn class_members(labels: &[usize]) -> Vec<Vec<usize>> {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    members
}

/// Per-class member lists, each shuffled by its own substream.
fn shuffled_members(labels: &[usize], seed: u64, stream: &str) -> Vec<Vec<usize>> {
    let mut members = class_members(labels);
    for (c, m) in members.iter_mut().enumerate() {
        m.shuffle(&mut substream(seed, stream, &[c as u64]));
    }
    members
}

/// Stratified k-fold: each class is shuffled and dealt round-robin into the
/// folds, continuing the deal across classes so fold sizes stay balanced.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("cross-validation needs k ≥ 2, got {k}")));
    }
    let members = shuffled_members(labels, seed, "folds");
    for (c, m) in members.iter().enumerate() {
        if m.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {} trials, fewer than {k} folds",
                m.len()
            )));
        }
    }
    let mut assignments = vec![0; labels.len()];
    for (pos, &i) in members.iter().flatten().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan { k, assignments, seed })
}

/// Splits `total` across classes in proportion to `sizes` by largest
/// remainder, never giving a class more than it has.
pub fn proportional_allocation(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let total = total.min(n);
    let quota: Vec<f64> = sizes.iter().map(|&s| total as f64 * s as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = quota.iter().zip(sizes).map(|(q, &s)| (q.floor() as usize).min(s)).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quota[a] - quota[a].floor();
        let rb = quota[b] - quota[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total - alloc.iter().sum::<usize>();
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if alloc[c] < sizes[c] {
            alloc[c] += 1;
            left -= 1;
        }
    }
    alloc
}

/// Stratified split with `round(test_fraction·N)` test trials. Returns sorted
/// `(train, test)` index lists.
pub fn holdout_split(labels: &[usize], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} must lie strictly between 0 and 1"
        )));
    }
    let n_test = (test_fraction * labels.len() as f64).round() as usize;
    if n_test == 0 || n_test >= labels.len() {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} of {} trials leaves an empty side",
            labels.len()
        )));
    }
    let members = shuffled_members(labels, seed, "holdout");
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let alloc = proportional_allocation(&sizes, n_test);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (m, &a) in members.iter().zip(&alloc) {
        test.extend_from_slice(&m[..a]);
        train.extend_from_slice(&m[a..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
