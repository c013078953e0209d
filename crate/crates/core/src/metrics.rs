use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::bce_loss;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    pub logloss: f64,
    pub num_eval: usize,
    /// Records dropped because their user or ad is not in the vocabulary.
    pub num_skipped: usize,
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "auc={:.6} logloss={:.6}", self.auc, self.logloss)
    }
}

/// Area under the ROC curve as the Mann-Whitney statistic, ties counted 0.5.
///
/// Computed from average ranks after one sort, so `O(n log n)`.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::domain("NaN score"));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels {
            num_eval: labels.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // Sum of (1-based, tie-averaged) ranks of the positives, kept in half units
    // so every intermediate stays an exact integer.
    let mut pos_rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the average (i + j + 2) / 2
        let avg_x2 = (i + j + 2) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        pos_rank_sum_x2 += avg_x2 * pos_in_group;
        i = j + 1;
    }
    let p = positives as u128;
    let u_x2 = pos_rank_sum_x2 - p * (p + 1);
    Ok(u_x2 as f64 / 2.0 / (positives as f64 * negatives as f64))
}

pub fn logloss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    bce_loss(probs, labels)
}
