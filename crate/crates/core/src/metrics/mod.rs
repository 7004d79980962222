//! Binary ROC/AUC, accuracy and multi-seed strategy comparison.

mod compare;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compare::{compare_strategies, ComparisonReport, ComparisonRow, RunHistory};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("only one class present among {0} labels")]
    SingleClass(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("misaligned histories: {0}")]
    MisalignedHistories(String),
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::SingleClass(_) => "SINGLE_CLASS",
            MetricsError::LengthMismatch(..) => "LENGTH_MISMATCH",
            MetricsError::NonFiniteScore(_) => "NON_FINITE_SCORE",
            MetricsError::MisalignedHistories(_) => "MISALIGNED_HISTORIES",
        }
    }
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Metrics recorded at the end of one annotation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub labeled_count: usize,
    pub val_auc: Option<f64>,
    pub test_auc: Option<f64>,
    pub savings: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Operating points from `(0,0)` to `(1,1)`, one per distinct score threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
            .sum()
    }
}

fn check(labels: &[bool], scores: &[f64]) -> Result<(usize, usize)> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(labels.len(), scores.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass(labels.len()));
    }
    Ok((pos, neg))
}

/// ROC curve with thresholds at every distinct score, highest first.
pub fn roc_curve(labels: &[bool], scores: &[f64]) -> Result<RocCurve> {
    let (pos, neg) = check(labels, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(RocCurve { points })
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs where the positive
/// scores higher, ties counting one half. Computed from mid-ranks in `O(n log n)`.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    let (pos, neg) = check(labels, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives, so mid-ranks stay integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share the mid-rank (i + 1 + j) / 2.
        let mid2 = (i + 1 + j) as u128;
        let pos_in_tie = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        rank_sum2 += mid2 * pos_in_tie;
        i = j;
    }
    let (p, n) = (pos as u128, neg as u128);
    // U = R - p(p+1)/2, doubled.
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

pub fn accuracy(labels: &[usize], predicted: &[usize]) -> Result<f64> {
    if labels.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch(labels.len(), predicted.len()));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = labels.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}
