//! Confusion counts and the derived classification metrics.

use serde::{Deserialize, Serialize};

/// Precision is 0 when nothing was predicted positive, recall is 0 when
/// no positives exist, and F1 is 0 when precision + recall is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(true_pos: u64, false_pos: u64, true_neg: u64, false_neg: u64) -> Self {
        let total = true_pos + false_pos + true_neg + false_neg;
        let accuracy = if total > 0 {
            (true_pos + true_neg) as f64 / total as f64
        } else {
            0.0
        };
        let precision = if true_pos + false_pos > 0 {
            true_pos as f64 / (true_pos + false_pos) as f64
        } else {
            0.0
        };
        let recall = if true_pos + false_neg > 0 {
            true_pos as f64 / (true_pos + false_neg) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            true_pos,
            false_pos,
            true_neg,
            false_neg,
            accuracy,
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}
