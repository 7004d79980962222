use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{MetricsError, Result, RoundRecord};

/// Round history of one (strategy, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub strategy: String,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
}

/// Aggregates for one strategy at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub round: usize,
    pub n_seeds: usize,
    pub mean_val_auc: Option<f64>,
    pub std_val_auc: Option<f64>,
    pub mean_test_auc: Option<f64>,
    pub std_test_auc: Option<f64>,
    /// Paired mean of `test_auc(treatment) − test_auc(control)` over seeds.
    pub mean_diff: Option<f64>,
    /// Seeds where the treatment's test AUC is strictly higher.
    pub sign_count: Option<usize>,
    pub n_pairs: usize,
    /// Set when fewer than two seeds back the aggregate.
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub treatment: String,
    pub control: String,
    pub rows: Vec<ComparisonRow>,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

/// Per-round mean/std of validation and test AUC per strategy, plus the paired
/// `treatment − control` test-AUC difference and its sign count.
///
/// Every strategy must cover the same seeds with the same number of rounds.
pub fn compare_strategies(
    histories: &[RunHistory],
    treatment: &str,
    control: &str,
) -> Result<ComparisonReport> {
    let mut by_strategy: BTreeMap<&str, BTreeMap<u64, &RunHistory>> = BTreeMap::new();
    for h in histories {
        if by_strategy
            .entry(&h.strategy)
            .or_default()
            .insert(h.seed, h)
            .is_some()
        {
            return Err(MetricsError::MisalignedHistories(format!(
                "duplicate run for strategy {} seed {}",
                h.strategy, h.seed
            )));
        }
    }
    let mut seeds: Option<BTreeSet<u64>> = None;
    let mut rounds: Option<usize> = None;
    for (name, runs) in &by_strategy {
        let these: BTreeSet<u64> = runs.keys().copied().collect();
        match &seeds {
            None => seeds = Some(these),
            Some(s) if *s != these => {
                return Err(MetricsError::MisalignedHistories(format!(
                    "strategy {name} covers seeds {these:?}, expected {s:?}"
                )))
            }
            _ => {}
        }
        for run in runs.values() {
            match rounds {
                None => rounds = Some(run.records.len()),
                Some(r) if r != run.records.len() => {
                    return Err(MetricsError::MisalignedHistories(format!(
                        "strategy {name} seed {} has {} rounds, expected {r}",
                        run.seed,
                        run.records.len()
                    )))
                }
                _ => {}
            }
        }
    }
    let rounds = rounds.unwrap_or(0);

    let paired = |round: usize| -> Option<(f64, usize, usize)> {
        let t = by_strategy.get(treatment)?;
        let c = by_strategy.get(control)?;
        let diffs: Vec<f64> = t
            .iter()
            .filter_map(|(seed, run)| {
                let a = run.records[round].test_auc?;
                let b = c.get(seed)?.records[round].test_auc?;
                Some(a - b)
            })
            .collect();
        if diffs.is_empty() {
            return None;
        }
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        Some((
            mean,
            diffs.iter().filter(|&&d| d > 0.0).count(),
            diffs.len(),
        ))
    };

    let mut rows = Vec::new();
    for (name, runs) in &by_strategy {
        for round in 0..rounds {
            let val: Vec<f64> = runs
                .values()
                .filter_map(|r| r.records[round].val_auc)
                .collect();
            let test: Vec<f64> = runs
                .values()
                .filter_map(|r| r.records[round].test_auc)
                .collect();
            let (mean_val_auc, std_val_auc) = mean_std(&val);
            let (mean_test_auc, std_test_auc) = mean_std(&test);
            let diff = paired(round);
            rows.push(ComparisonRow {
                strategy: name.to_string(),
                round: runs
                    .values()
                    .next()
                    .map_or(round, |r| r.records[round].round),
                n_seeds: runs.len(),
                mean_val_auc,
                std_val_auc,
                mean_test_auc,
                std_test_auc,
                mean_diff: diff.map(|d| d.0),
                sign_count: diff.map(|d| d.1),
                n_pairs: diff.map_or(0, |d| d.2),
                low_confidence: runs.len() < 2,
            });
        }
    }
    Ok(ComparisonReport {
        treatment: treatment.to_string(),
        control: control.to_string(),
        rows,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ComparisonReport {
    pub fn row(&self, strategy: &str, round: usize) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.round == round)
    }

    /// One row per (strategy, round).
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "strategy",
            "round",
            "n_seeds",
            "mean_val_auc",
            "std_val_auc",
            "mean_auc",
            "std_auc",
            "mean_diff",
            "sign_count",
            "n_pairs",
            "low_confidence",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.strategy.clone(),
                r.round.to_string(),
                r.n_seeds.to_string(),
                opt(r.mean_val_auc),
                opt(r.std_val_auc),
                opt(r.mean_test_auc),
                opt(r.std_test_auc),
                opt(r.mean_diff),
                opt(r.sign_count),
                r.n_pairs.to_string(),
                r.low_confidence.to_string(),
            ])?;
        }
        w.flush()
    }

    /// Long format `strategy,round,metric,value`, skipping missing values.
    pub fn write_long_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["strategy", "round", "metric", "value"])?;
        for r in &self.rows {
            let metrics = [
                ("mean_val_auc", r.mean_val_auc),
                ("std_val_auc", r.std_val_auc),
                ("mean_auc", r.mean_test_auc),
                ("std_auc", r.std_test_auc),
                ("mean_diff", r.mean_diff),
                ("sign_count", r.sign_count.map(|c| c as f64)),
            ];
            for (name, value) in metrics {
                if let Some(v) = value {
                    w.write_record([
                        r.strategy.clone(),
                        r.round.to_string(),
                        name.to_string(),
                        v.to_string(),
                    ])?;
                }
            }
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(strategy: &str, seed: u64, aucs: &[f64]) -> RunHistory {
        RunHistory {
            strategy: strategy.into(),
            seed,
            records: aucs
                .iter()
                .enumerate()
                .map(|(i, &a)| RoundRecord {
                    round: i + 1,
                    labeled_count: 10 * (i + 1),
                    val_auc: Some(a),
                    test_auc: Some(a),
                    savings: 0.5,
                })
                .collect(),
        }
    }

    #[test]
    fn identical_histories_have_zero_difference() {
        let h: Vec<RunHistory> = (0..3)
            .flat_map(|s| {
                [
                    run("UNCERTAINTY", s, &[0.7, 0.8]),
                    run("RANDOM", s, &[0.7, 0.8]),
                ]
            })
            .collect();
        let rep = compare_strategies(&h, "UNCERTAINTY", "RANDOM").unwrap();
        assert_eq!(rep.rows.len(), 4);
        for r in &rep.rows {
            assert_eq!(r.mean_diff, Some(0.0));
            assert_eq!(r.sign_count, Some(0));
        }
    }

    #[test]
    fn uniform_lift_over_ten_seeds() {
        let h: Vec<RunHistory> = (0..10)
            .flat_map(|s| {
                let base = 0.6 + s as f64 * 0.01;
                [
                    run("UNCERTAINTY", s, &[base + 0.05]),
                    run("RANDOM", s, &[base]),
                ]
            })
            .collect();
        let rep = compare_strategies(&h, "UNCERTAINTY", "RANDOM").unwrap();
        let row = rep.row("UNCERTAINTY", 1).unwrap();
        assert!((row.mean_diff.unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(row.sign_count, Some(10));
        assert_eq!(row.n_pairs, 10);
        assert!(!row.low_confidence);
    }

    #[test]
    fn single_seed_is_flagged() {
        let h = vec![run("UNCERTAINTY", 0, &[0.7]), run("RANDOM", 0, &[0.6])];
        let rep = compare_strategies(&h, "UNCERTAINTY", "RANDOM").unwrap();
        assert!(rep.rows.iter().all(|r| r.low_confidence));
        assert_eq!(rep.row("RANDOM", 1).unwrap().std_test_auc, Some(0.0));
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let h = vec![run("UNCERTAINTY", 0, &[0.7]), run("RANDOM", 1, &[0.6])];
        assert_eq!(
            compare_strategies(&h, "UNCERTAINTY", "RANDOM")
                .unwrap_err()
                .code(),
            "MISALIGNED_HISTORIES"
        );
        let h = vec![run("UNCERTAINTY", 0, &[0.7, 0.8]), run("RANDOM", 0, &[0.6])];
        assert!(compare_strategies(&h, "UNCERTAINTY", "RANDOM").is_err());
    }

    #[test]
    fn csv_shapes() {
        let h = vec![
            run("UNCERTAINTY", 0, &[0.7]),
            run("RANDOM", 0, &[0.6]),
            run("UNCERTAINTY", 1, &[0.8]),
            run("RANDOM", 1, &[0.6]),
        ];
        let rep = compare_strategies(&h, "UNCERTAINTY", "RANDOM").unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text
            .lines()
            .next()
            .unwrap()
            .contains("mean_auc,std_auc,mean_diff,sign_count"));
        let mut long = Vec::new();
        rep.write_long_csv(&mut long).unwrap();
        assert_eq!(String::from_utf8(long).unwrap().lines().count(), 1 + 2 * 6);
    }
}
