//! On-disk session layout.
//!
//! ```text
//! <dir>/config.json      SessionConfig
//! <dir>/pool.json        PoolState id lists
//! <dir>/state.json       phase, round, pending queries, labels, budget
//! <dir>/history.csv      round,labeled_count,val_auc,test_auc,savings
//! <dir>/queries.csv      round,sample_id,label (every oracle answer, in order)
//! <dir>/report.json      latest uncertainty report (when scored)
//! <dir>/report.csv       sample_id,entropy_sum,kl_sum,score,rank
//! <dir>/base.bin         warm-start weights
//! <dir>/committee_<k>.bin, final.bin
//! ```
//!
//! A save writes a complete sibling `<dir>.staging` first and then swaps it in, so a
//! crash leaves either the previous or the new state on disk.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::session::QueryRecord;
use super::{AlSession, BudgetLedger, EngineError, Phase, Result, SessionConfig};
use crate::data::{Dataset, PoolState, SampleId};
use crate::metrics::RoundRecord;
use crate::model::{decode_weights, encode_weights};
use crate::uncertainty::UncertaintyReport;

#[derive(Serialize, Deserialize)]
struct SessionState {
    round: usize,
    phase: Phase,
    pending: Vec<SampleId>,
    batch_answered: usize,
    labels: Vec<(SampleId, usize)>,
    budget: BudgetLedger,
    committee_size: usize,
    has_final_model: bool,
}

fn persist_err(path: &Path, e: impl std::fmt::Display) -> EngineError {
    EngineError::Persist(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| persist_err(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| persist_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| persist_err(path, e))?;
    write(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).map_err(|e| persist_err(path, e))
}

fn staging_path(dir: &Path) -> PathBuf {
    let mut name = dir.file_name().unwrap_or_default().to_os_string();
    name.push(".staging");
    dir.with_file_name(name)
}

fn opt_str(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes round records as `round,labeled_count,val_auc,test_auc,savings`; missing AUCs are empty.
pub fn write_history_csv<W: Write>(records: &[RoundRecord], writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["round", "labeled_count", "val_auc", "test_auc", "savings"])?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.labeled_count.to_string(),
            opt_str(r.val_auc),
            opt_str(r.test_auc),
            r.savings.to_string(),
        ])?;
    }
    w.flush()
}

/// Parses the output of [`write_history_csv`]. Errors describe the offending row.
pub fn read_history_csv<R: Read>(reader: R) -> std::result::Result<Vec<RoundRecord>, String> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let expected = ["round", "labeled_count", "val_auc", "test_auc", "savings"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(format!(
            "unexpected header {:?}",
            headers.iter().collect::<Vec<_>>()
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = i + 1;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let int = |k: usize| {
            field(k)
                .parse::<usize>()
                .map_err(|_| format!("row {row}: bad {}", expected[k]))
        };
        let float = |k: usize| -> std::result::Result<Option<f64>, String> {
            match field(k) {
                "" => Ok(None),
                s => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| format!("row {row}: bad {}", expected[k])),
            }
        };
        out.push(RoundRecord {
            round: int(0)?,
            labeled_count: int(1)?,
            val_auc: float(2)?,
            test_auc: float(3)?,
            savings: float(4)?.ok_or_else(|| format!("row {row}: missing savings"))?,
        });
    }
    Ok(out)
}

impl AlSession {
    /// Persists the whole session under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let staging = staging_path(dir);
        if staging.exists() {
            std::fs::remove_dir_all(&staging).map_err(|e| persist_err(&staging, e))?;
        }
        std::fs::create_dir_all(&staging).map_err(|e| persist_err(&staging, e))?;

        write_json(&staging.join("config.json"), &self.config)?;
        write_json(&staging.join("pool.json"), &self.pool)?;
        let state = SessionState {
            round: self.round,
            phase: self.phase,
            pending: self.pending.clone(),
            batch_answered: self.batch_answered,
            labels: self.labels.iter().map(|(&id, &l)| (id, l)).collect(),
            budget: self.budget,
            committee_size: self.committee.len(),
            has_final_model: self.final_model.is_some(),
        };
        write_json(&staging.join("state.json"), &state)?;

        let mut hist = Vec::new();
        write_history_csv(&self.history, &mut hist).map_err(|e| persist_err(&staging, e))?;
        write(&staging.join("history.csv"), &hist)?;

        let mut q = csv::Writer::from_writer(Vec::new());
        let qpath = staging.join("queries.csv");
        q.write_record(["round", "sample_id", "label"])
            .map_err(|e| persist_err(&qpath, e))?;
        for r in &self.transcript {
            q.write_record([
                r.round.to_string(),
                r.sample_id.to_string(),
                r.label.to_string(),
            ])
            .map_err(|e| persist_err(&qpath, e))?;
        }
        write(&qpath, &q.into_inner().map_err(|e| persist_err(&qpath, e))?)?;

        if let Some(report) = &self.report {
            write_json(&staging.join("report.json"), report)?;
            let mut buf = Vec::new();
            report
                .write_csv(&mut buf)
                .map_err(|e| persist_err(&staging, e))?;
            write(&staging.join("report.csv"), &buf)?;
        }
        write(&staging.join("base.bin"), &encode_weights(&self.base))?;
        for (k, m) in self.committee.iter().enumerate() {
            write(
                &staging.join(format!("committee_{k}.bin")),
                &encode_weights(m),
            )?;
        }
        if let Some(m) = &self.final_model {
            write(&staging.join("final.bin"), &encode_weights(m))?;
        }

        if dir.exists() {
            std::fs::remove_dir_all(dir).map_err(|e| persist_err(dir, e))?;
        }
        std::fs::rename(&staging, dir).map_err(|e| persist_err(dir, e))
    }

    /// Restores a session saved with [`AlSession::save`] over the same dataset.
    pub fn load(dir: &Path, dataset: Arc<Dataset>) -> Result<Self> {
        let staging = staging_path(dir);
        let dir = if !dir.exists() && staging.exists() {
            staging.as_path()
        } else {
            dir
        };

        let config: SessionConfig = read_json(&dir.join("config.json"))?;
        let pool: PoolState = read_json(&dir.join("pool.json"))?;
        let state: SessionState = read_json(&dir.join("state.json"))?;
        let hist_path = dir.join("history.csv");
        let history = read_history_csv(read(&hist_path)?.as_slice())
            .map_err(|e| persist_err(&hist_path, e))?;

        let qpath = dir.join("queries.csv");
        let mut transcript = Vec::new();
        let qbytes = read(&qpath)?;
        let mut rdr = csv::Reader::from_reader(qbytes.as_slice());
        for rec in rdr.deserialize::<(usize, SampleId, usize)>() {
            let (round, sample_id, label) = rec.map_err(|e| persist_err(&qpath, e))?;
            transcript.push(QueryRecord {
                round,
                sample_id,
                label,
            });
        }

        let report_path = dir.join("report.json");
        let report: Option<UncertaintyReport> = if report_path.exists() {
            Some(read_json(&report_path)?)
        } else {
            None
        };
        let model = |name: &str| -> Result<_> {
            let p = dir.join(name);
            decode_weights(&read(&p)?).map_err(|e| persist_err(&p, e))
        };
        let base = model("base.bin")?;
        let committee = (0..state.committee_size)
            .map(|k| model(&format!("committee_{k}.bin")))
            .collect::<Result<Vec<_>>>()?;
        let final_model = if state.has_final_model {
            Some(model("final.bin")?)
        } else {
            None
        };

        Ok(Self {
            config,
            dataset,
            pool,
            labels: state.labels.into_iter().collect(),
            round: state.round,
            phase: state.phase,
            base,
            committee,
            final_model,
            report,
            pending: state.pending,
            batch_answered: state.batch_answered,
            budget: state.budget,
            history,
            transcript,
        })
    }
}
