//! Classification metrics.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs where the positive scores higher, ties
/// counting one half. Computed from tie-averaged ranks in `O(n log n)`.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(
            "scores and labels differ in length".into(),
        ));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Validation(alloc::format!(
            "label must be 0 or 1, got {bad}"
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum keeps tie-averaged ranks integral.
    let mut twice_rank_sum_pos: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based: (i+1 + j+1) / 2 averaged over the tie group
        let twice_avg = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum_pos += twice_avg * pos_in_group;
        i = j + 1;
    }
    let np = n_pos as u128;
    // 2U = 2R - n_pos (n_pos + 1)
    let twice_u = twice_rank_sum_pos - np * (np + 1);
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Fraction of predictions on the correct side of `threshold`.
pub fn accuracy_at(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|&(&s, &l)| (s >= threshold) == (l == 1))
        .count();
    correct as f64 / scores.len() as f64
}
