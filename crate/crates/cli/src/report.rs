//! Consolidates run histories into one long table and gnuplot data files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use alloop_core::engine::read_history_csv;
use alloop_core::metrics::RoundRecord;
use serde::Deserialize;

use crate::experiment::write_file;
use crate::{CliError, Result};

pub const METRICS: [&str; 4] = ["labeled_count", "val_auc", "test_auc", "savings"];

#[derive(Debug, Clone, PartialEq)]
pub struct LongRow {
    pub strategy: String,
    pub seed: u64,
    pub round: usize,
    pub metric: &'static str,
    pub value: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct RunIdentity {
    strategy: String,
    seed: u64,
}

/// Run directories are named `<STRATEGY>_seed<N>`; `run.json` wins when present.
fn identify(dir: &Path) -> Result<(String, u64)> {
    let meta = dir.join("run.json");
    if let Ok(bytes) = std::fs::read(&meta) {
        let id: RunIdentity =
            serde_json::from_slice(&bytes).map_err(|e| CliError::MalformedHistory {
                file: meta.clone(),
                detail: e.to_string(),
            })?;
        return Ok((id.strategy, id.seed));
    }
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    name.rsplit_once("_seed")
        .and_then(|(s, n)| Some((s.to_owned(), n.parse().ok()?)))
        .ok_or_else(|| CliError::MalformedHistory {
            file: dir.to_path_buf(),
            detail: "cannot tell strategy and seed (no run.json, name not <STRATEGY>_seed<N>)"
                .into(),
        })
}

/// Accepts run directories and experiment directories (which hold `runs/`).
fn expand(dirs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut runs = Vec::new();
    for d in dirs {
        if d.join("history.csv").is_file() {
            runs.push(d.clone());
        } else if d.join("runs").is_dir() {
            let rd = d.join("runs");
            let mut found: Vec<PathBuf> = std::fs::read_dir(&rd)
                .map_err(|e| CliError::io(&rd, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join("history.csv").is_file())
                .collect();
            found.sort();
            runs.extend(found);
        } else {
            return Err(CliError::MalformedHistory {
                file: d.join("history.csv"),
                detail: "missing (not a run or experiment directory)".into(),
            });
        }
    }
    Ok(runs)
}

fn load(dir: &Path) -> Result<(String, u64, Vec<RoundRecord>)> {
    let (strategy, seed) = identify(dir)?;
    let file = dir.join("history.csv");
    let bytes = std::fs::read(&file).map_err(|e| CliError::MalformedHistory {
        file: file.clone(),
        detail: e.to_string(),
    })?;
    let records = read_history_csv(bytes.as_slice())
        .map_err(|detail| CliError::MalformedHistory { file, detail })?;
    Ok((strategy, seed, records))
}

/// Reads every history under `dirs` and writes `report.csv` (strategy, seed, round,
/// metric, value) plus one `<strategy>.dat` per strategy into `out`.
pub fn report(dirs: &[PathBuf], out: &Path) -> Result<Vec<LongRow>> {
    let mut runs = expand(dirs)?
        .iter()
        .map(|d| load(d))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));

    let mut rows = Vec::new();
    for (strategy, seed, records) in &runs {
        for r in records {
            let values = [
                Some(r.labeled_count as f64),
                r.val_auc,
                r.test_auc,
                Some(r.savings),
            ];
            for (metric, value) in METRICS.into_iter().zip(values) {
                rows.push(LongRow {
                    strategy: strategy.clone(),
                    seed: *seed,
                    round: r.round,
                    metric,
                    value,
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        let key = |r: &LongRow| {
            (
                r.strategy.clone(),
                r.seed,
                r.round,
                METRICS.iter().position(|m| *m == r.metric),
            )
        };
        key(a).cmp(&key(b))
    });

    let mut csv = String::from("strategy,seed,round,metric,value\n");
    for r in &rows {
        let v = r.value.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.strategy, r.seed, r.round, r.metric, v
        );
    }
    write_file(&out.join("report.csv"), csv.as_bytes())?;

    for (strategy, body) in plot_data(&rows) {
        write_file(&out.join(format!("{strategy}.dat")), body.as_bytes())?;
    }
    Ok(rows)
}

/// Seed-averaged curves, whitespace separated, one line per round.
fn plot_data(rows: &[LongRow]) -> BTreeMap<String, String> {
    let mut acc: BTreeMap<(&str, usize, &str), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = r.value {
            acc.entry((&r.strategy, r.round, r.metric))
                .or_default()
                .push(v);
        }
    }
    let rounds: BTreeMap<&str, Vec<usize>> = rows.iter().fold(BTreeMap::new(), |mut m, r| {
        let v: &mut Vec<usize> = m.entry(r.strategy.as_str()).or_default();
        if !v.contains(&r.round) {
            v.push(r.round);
        }
        m
    });
    let stat = |v: Option<&Vec<f64>>| -> (String, String) {
        match v {
            Some(v) if !v.is_empty() => {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let sd = if v.len() > 1 {
                    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                (mean.to_string(), sd.to_string())
            }
            _ => ("NaN".into(), "NaN".into()),
        }
    };
    let mut out = BTreeMap::new();
    for (strategy, mut rs) in rounds {
        rs.sort_unstable();
        let mut body = String::from(
            "# round mean_labeled mean_val_auc std_val_auc mean_test_auc std_test_auc\n",
        );
        for round in rs {
            let (lab, _) = stat(acc.get(&(strategy, round, "labeled_count")));
            let (mv, sv) = stat(acc.get(&(strategy, round, "val_auc")));
            let (mt, st) = stat(acc.get(&(strategy, round, "test_auc")));
            let _ = writeln!(body, "{round} {lab} {mv} {sv} {mt} {st}");
        }
        out.insert(strategy.to_owned(), body);
    }
    out
}
