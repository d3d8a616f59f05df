//! Evaluation metrics.

use crate::error::{Error, Result};

/// Relative CTCVR lift of an experiment over a baseline.
pub fn delta_ctcvr(experiment: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::Precondition(format!(
            "baseline CTCVR must be positive (got {baseline})"
        )));
    }
    Ok((experiment - baseline) / baseline)
}

/// Fraction of texts that pass the screen.
pub fn compliance_rate(passed: &[bool]) -> f64 {
    if passed.is_empty() {
        return 0.0;
    }
    passed.iter().filter(|&&p| p).count() as f64 / passed.len() as f64
}

/// Mean diversity reward over evaluated texts.
pub fn diversity_metric(diversity_rewards: &[f64]) -> f64 {
    mean(diversity_rewards)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Pairwise ranking agreement between `scores` and a continuous `target`:
/// over all pairs with distinct targets, the fraction ordered the same way by
/// `scores` (score ties count one half). Equals the ROC AUC when `target` is
/// binary.
pub fn ranking_auc(scores: &[f64], target: &[f64]) -> Result<f64> {
    if scores.len() != target.len() {
        return Err(Error::LengthMismatch {
            what: "scores and targets",
            left: scores.len(),
            right: target.len(),
        });
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| target[a].total_cmp(&target[b]));

    // Walk pairs in target order; a Fenwick tree over score ranks counts how
    // many earlier (strictly lower target) items score below/equal.
    let mut ranks: Vec<f64> = scores.to_vec();
    ranks.sort_by(f64::total_cmp);
    ranks.dedup();
    let rank_of = |s: f64| ranks.partition_point(|&r| r < s);
    let mut tree = vec![0u64; ranks.len() + 1];
    let add = |tree: &mut Vec<u64>, mut i: usize| {
        i += 1;
        while i < tree.len() {
            tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    };
    let prefix = |tree: &Vec<u64>, mut i: usize| -> u64 {
        // count of inserted ranks < i
        let mut s = 0;
        while i > 0 {
            s += tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    };

    let (mut concordant, mut pairs) = (0.0f64, 0.0f64);
    let mut inserted = 0u64;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end < idx.len() && target[idx[end]] == target[idx[start]] {
            end += 1;
        }
        for &i in &idx[start..end] {
            let r = rank_of(scores[i]);
            let below = prefix(&tree, r);
            let equal = prefix(&tree, r + 1) - below;
            concordant += below as f64 + 0.5 * equal as f64;
            pairs += inserted as f64;
        }
        for &i in &idx[start..end] {
            add(&mut tree, rank_of(scores[i]));
            inserted += 1;
        }
        start = end;
    }
    if pairs == 0.0 {
        return Err(Error::Precondition("ranking AUC needs two distinct targets".into()));
    }
    Ok(concordant / pairs)
}
