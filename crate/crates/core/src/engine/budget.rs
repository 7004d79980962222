use serde::{Deserialize, Serialize};

/// Annotation cost accounting over the training cohort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub train_cohort_size: usize,
    pub initially_labeled: usize,
    /// Labels obtained from the oracle.
    pub queried_total: usize,
    /// Selected samples that were already labeled and cost nothing.
    pub overlap_total: usize,
    pub distinct_labeled: usize,
    pub savings_fraction: f64,
}

impl BudgetLedger {
    pub fn new(train_cohort_size: usize, initially_labeled: usize) -> Self {
        let mut ledger = Self {
            train_cohort_size,
            initially_labeled,
            queried_total: 0,
            overlap_total: 0,
            distinct_labeled: initially_labeled,
            savings_fraction: 0.0,
        };
        ledger.refresh();
        ledger
    }

    fn refresh(&mut self) {
        self.savings_fraction = if self.train_cohort_size == 0 {
            0.0
        } else {
            1.0 - self.distinct_labeled as f64 / self.train_cohort_size as f64
        };
    }

    pub(crate) fn record_answers(&mut self, answered: usize, distinct_labeled: usize) {
        self.queried_total += answered;
        self.distinct_labeled = distinct_labeled;
        self.refresh();
    }

    pub(crate) fn record_overlap(&mut self, overlap: usize) {
        self.overlap_total += overlap;
    }

    /// Fraction of the cohort that is labeled.
    pub fn labeled_fraction(&self) -> f64 {
        1.0 - self.savings_fraction
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_overlap_saves_forty_percent() {
        let mut b = BudgetLedger::new(100, 30);
        b.record_answers(30, 60);
        assert_eq!(b.savings_fraction, 0.4);
        assert!(b.distinct_labeled <= b.initially_labeled + b.queried_total);
    }

    #[test]
    fn full_overlap_saves_seventy_percent() {
        let mut b = BudgetLedger::new(100, 30);
        b.record_overlap(30);
        b.record_answers(0, 30);
        assert_eq!(b.savings_fraction, 0.7);
    }

    #[test]
    fn everything_labeled_saves_nothing() {
        let b = BudgetLedger::new(100, 100);
        assert_eq!(b.savings_fraction, 0.0);
    }
}
