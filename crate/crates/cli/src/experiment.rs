//! Multi-seed simulated-oracle experiments and the uncertainty-band study.
//!
//! Every run is a pure function of the spec and its seed, so rerunning a spec
//! reproduces the output tree byte for byte.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use alloop_core::data::{
    balance, generate_synthetic, load_csv, load_idx, split, Dataset, FeatureStats, PoolState,
    SampleId, SplitSpec,
};
use alloop_core::engine::{
    write_history_csv, AlSession, BudgetLedger, SessionConfig, SimulatedOracle, Strategy,
};
use alloop_core::metrics::{compare_strategies, ComparisonReport, RoundRecord, RunHistory};
use alloop_core::model::{gather_labeled, train, Classifier, ModelConfig, TrainConfig};
use alloop_core::uncertainty::BandSpec;
use alloop_core::util::{atomic_write, derive_seed};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

/// Seed streams for the data side of a run; the engine owns tags below 10.
mod stream {
    pub const DATA: u64 = 10;
    pub const SPLIT: u64 = 11;
    pub const BALANCE: u64 = 12;
    pub const PRETRAIN_DATA: u64 = 13;
    pub const PRETRAIN: u64 = 14;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    /// Isotropic Gaussian classes, regenerated for every seed.
    Synthetic {
        n_per_class: usize,
        means: Vec<Vec<f64>>,
        stddev: f64,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

fn default_label_column() -> String {
    "label".to_owned()
}

impl DatasetSource {
    fn load(&self, seed: u64) -> Result<Dataset> {
        let ds = match self {
            DatasetSource::Synthetic {
                n_per_class,
                means,
                stddev,
            } => generate_synthetic(*n_per_class, means, *stddev, seed),
            DatasetSource::Csv { path, label_column } => load_csv(path, label_column),
            DatasetSource::Idx { images, labels } => load_idx(images, labels),
        };
        ds.map_err(|e| CliError::Runtime(format!("dataset: {} ({})", e, e.code())))
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetSource::Synthetic { .. } => {}
            DatasetSource::Csv { path, .. } => fix(path),
            DatasetSource::Idx { images, labels } => {
                fix(images);
                fix(labels);
            }
        }
    }
}

/// Warm start: train the base model on a source task before the session begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainSpec {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandGrid {
    /// `[lo, hi)` percentile intervals over the uncertainty ranking.
    pub bands: Vec<[f64; 2]>,
    #[serde(default)]
    pub drop_top: f64,
    #[serde(default)]
    pub drop_bottom: f64,
}

fn default_normalize() -> bool {
    true
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::Uncertainty, Strategy::Random]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: DatasetSource,
    /// The seed field is ignored; each run derives its own split seed.
    #[serde(default)]
    pub split: SplitSpec,
    /// Undersample every class to the smallest one before splitting.
    #[serde(default)]
    pub balance: bool,
    /// Standardise features with statistics of the training cohort.
    #[serde(default = "default_normalize")]
    pub normalize: bool,
    #[serde(default)]
    pub pretrain: Option<PretrainSpec>,
    /// The seed field is ignored; each run uses its own seed.
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub band_study: Option<BandGrid>,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

/// Command-line overrides applied on top of a spec file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rounds: Option<usize>,
    pub strategies: Option<Vec<Strategy>>,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a spec; relative dataset paths are taken relative to the spec file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut spec = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.dataset.resolve(base);
        if let Some(p) = &mut spec.pretrain {
            p.dataset.resolve(base);
        }
        if let Some(out) = &mut spec.out {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(spec)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seeds = vec![s];
        }
        if let Some(r) = o.rounds {
            self.session.rounds = r;
        }
        if let Some(s) = &o.strategies {
            self.strategies = s.clone();
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(CliError::Config("seeds must be distinct".into()));
        }
        if self.strategies.is_empty() {
            return Err(CliError::Config("at least one strategy is required".into()));
        }
        let distinct: BTreeSet<Strategy> = self.strategies.iter().copied().collect();
        if distinct.len() != self.strategies.len() {
            return Err(CliError::Config("strategies must be distinct".into()));
        }
        self.session
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.split
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(grid) = &self.band_study {
            for &[lo, hi] in &grid.bands {
                BandSpec {
                    lo,
                    hi,
                    drop_top: grid.drop_top,
                    drop_bottom: grid.drop_bottom,
                }
                .apply(&[])
                .map_err(|e| CliError::Config(format!("band [{lo}, {hi}): {e}")))?;
            }
        }
        Ok(())
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("no output directory (set `out` or pass --out)".into()))
    }
}

/// Dataset, pool and warm-start model shared by every strategy of one seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seed: u64,
    pub dataset: Arc<Dataset>,
    pub pool: PoolState,
    pub base: Classifier,
}

fn runtime<E: std::fmt::Display>(what: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{what}: {e}"))
}

pub fn prepare(spec: &ExperimentSpec, seed: u64) -> Result<Prepared> {
    let mut ds = spec.dataset.load(derive_seed(seed, &[stream::DATA]))?;
    if spec.balance {
        ds = balance(&ds, derive_seed(seed, &[stream::BALANCE])).map_err(runtime("balance"))?;
    }
    let split_spec = SplitSpec {
        seed: derive_seed(seed, &[stream::SPLIT]),
        ..spec.split
    };
    let pool = split(&ds, &split_spec).map_err(runtime("split"))?;
    let cohort: Vec<SampleId> = pool.training_cohort().into_iter().collect();
    let stats = if spec.normalize {
        let stats = FeatureStats::fit(&ds, Some(&cohort)).map_err(runtime("normalize"))?;
        ds = stats.apply(&ds).map_err(runtime("normalize"))?;
        Some(stats)
    } else {
        None
    };

    let model_cfg = ModelConfig {
        architecture: spec.session.architecture,
        class_count: ds.class_count(),
        feature_count: ds.feature_count(),
        seed: derive_seed(seed, &[alloop_core::engine::stream::MODEL_INIT]),
    };
    let init = Classifier::init(model_cfg).map_err(runtime("model"))?;
    let base = match &spec.pretrain {
        None => init,
        Some(p) => {
            let mut src = p
                .dataset
                .load(derive_seed(seed, &[stream::PRETRAIN_DATA]))?;
            if let Some(stats) = &stats {
                src = stats.apply(&src).map_err(runtime("pretrain data"))?;
            }
            let (x, y) = gather_labeled(&src, src.ids()).map_err(runtime("pretrain data"))?;
            let cfg = TrainConfig {
                seed: derive_seed(seed, &[stream::PRETRAIN]),
                ..p.train
            };
            train(&init, &x, &y, &cfg).map_err(runtime("pretrain"))?
        }
    };
    Ok(Prepared {
        seed,
        dataset: Arc::new(ds),
        pool,
        base,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub strategy: Strategy,
    pub seed: u64,
    pub cohort_size: usize,
    pub rounds_completed: usize,
    pub labeled_count: usize,
    pub final_val_auc: Option<f64>,
    pub final_test_auc: Option<f64>,
    #[serde(skip)]
    pub history: Vec<RoundRecord>,
    #[serde(skip)]
    pub budget: BudgetLedger,
}

fn session_config(spec: &ExperimentSpec, strategy: Strategy, seed: u64) -> SessionConfig {
    SessionConfig {
        strategy,
        seed,
        ..spec.session.clone()
    }
}

fn run_one(
    spec: &ExperimentSpec,
    prep: &Prepared,
    strategy: Strategy,
    dir: &Path,
) -> Result<RunSummary> {
    let cfg = session_config(spec, strategy, prep.seed);
    let mut session = AlSession::seed_with_base(
        prep.dataset.clone(),
        prep.pool.clone(),
        cfg,
        prep.base.clone(),
    )
    .map_err(runtime("session"))?;
    session
        .run_to_completion(&SimulatedOracle::new(&prep.dataset))
        .map_err(runtime("session"))?;
    let last = session.history().last();
    let summary = RunSummary {
        strategy,
        seed: prep.seed,
        cohort_size: prep.pool.cohort_size(),
        rounds_completed: session.history().len(),
        labeled_count: session.pool().labeled.len(),
        final_val_auc: last.and_then(|r| r.val_auc),
        final_test_auc: last.and_then(|r| r.test_auc),
        history: session.history().to_vec(),
        budget: session.budget_report(),
    };

    let mut hist = Vec::new();
    write_history_csv(session.history(), &mut hist).map_err(|e| CliError::io(dir, e))?;
    write_file(&dir.join("history.csv"), &hist)?;
    let mut queries = String::from("round,sample_id,label\n");
    for q in session.transcript() {
        let _ = writeln!(queries, "{},{},{}", q.round, q.sample_id, q.label);
    }
    write_file(&dir.join("queries.csv"), queries.as_bytes())?;
    write_json(&dir.join("budget.json"), &summary.budget)?;
    write_json(&dir.join("run.json"), &summary)?;
    Ok(summary)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    atomic_write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

pub fn run_dir_name(strategy: Strategy, seed: u64) -> String {
    format!("{}_seed{seed}", strategy.as_str())
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunSummary>,
    pub comparison: Option<ComparisonReport>,
}

fn prepare_all(spec: &ExperimentSpec) -> Result<Vec<Prepared>> {
    spec.seeds.par_iter().map(|&s| prepare(spec, s)).collect()
}

/// Runs every (strategy × seed) session and writes per-run files plus the aggregate
/// comparison and budget tables under the spec's output directory.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let out = spec.out_dir()?.to_path_buf();
    let prepared = prepare_all(spec)?;
    let jobs: Vec<(&Prepared, Strategy)> = prepared
        .iter()
        .flat_map(|p| spec.strategies.iter().map(move |&s| (p, s)))
        .collect();
    let runs: Vec<RunSummary> = jobs
        .par_iter()
        .map(|&(prep, strategy)| {
            let dir = out.join("runs").join(run_dir_name(strategy, prep.seed));
            let r = run_one(spec, prep, strategy, &dir)?;
            log::info!(
                "{} seed {}: test AUC {:?}, savings {:.3}",
                strategy,
                prep.seed,
                r.final_test_auc,
                r.budget.savings_fraction
            );
            Ok(r)
        })
        .collect::<Result<_>>()?;

    write_json(&out.join("spec.json"), spec)?;
    write_file(&out.join("budget.csv"), budget_csv(&runs).as_bytes())?;
    write_file(
        &out.join("budget_summary.csv"),
        budget_summary_csv(spec, &runs).as_bytes(),
    )?;

    let has = |s| spec.strategies.contains(&s);
    let comparison = if has(Strategy::Uncertainty) && has(Strategy::Random) {
        let histories: Vec<RunHistory> = runs
            .iter()
            .map(|r| RunHistory {
                strategy: r.strategy.as_str().to_owned(),
                seed: r.seed,
                records: r.history.clone(),
            })
            .collect();
        let report = compare_strategies(
            &histories,
            Strategy::Uncertainty.as_str(),
            Strategy::Random.as_str(),
        )
        .map_err(runtime("comparison"))?;
        let mut buf = Vec::new();
        report
            .write_csv(&mut buf)
            .map_err(|e| CliError::io(&out, e))?;
        write_file(&out.join("comparison.csv"), &buf)?;
        let mut buf = Vec::new();
        report
            .write_long_csv(&mut buf)
            .map_err(|e| CliError::io(&out, e))?;
        write_file(&out.join("comparison_long.csv"), &buf)?;
        Some(report)
    } else {
        log::info!("comparison needs both UNCERTAINTY and RANDOM; skipped");
        None
    };
    Ok(ExperimentOutcome { runs, comparison })
}

fn budget_csv(runs: &[RunSummary]) -> String {
    let mut s = String::from(
        "strategy,seed,train_cohort_size,initially_labeled,queried_total,overlap_total,distinct_labeled,savings_fraction\n",
    );
    for r in runs {
        let b = &r.budget;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.strategy,
            r.seed,
            b.train_cohort_size,
            b.initially_labeled,
            b.queried_total,
            b.overlap_total,
            b.distinct_labeled,
            b.savings_fraction
        );
    }
    s
}

fn budget_summary_csv(spec: &ExperimentSpec, runs: &[RunSummary]) -> String {
    let mut s = String::from("strategy,runs,mean_savings,min_savings,max_savings\n");
    for &strategy in &spec.strategies {
        let v: Vec<f64> = runs
            .iter()
            .filter(|r| r.strategy == strategy)
            .map(|r| r.budget.savings_fraction)
            .collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(s, "{strategy},{},{mean},{min},{max}", v.len());
    }
    s
}

/// One trained model of the band study.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub seed: u64,
    /// `None` marks the baseline trained on the whole cohort.
    pub band: Option<BandSpec>,
    pub train_ids: Vec<SampleId>,
    pub val_auc: Option<f64>,
    pub test_auc: Option<f64>,
}

/// Per seed: a committee trained on the seed set scores the whole cohort, then one
/// final model is trained per band of the ranking and evaluated. A baseline trained
/// on the whole cohort precedes the bands. Writes `bandstudy.csv` and per-seed
/// rankings and memberships under `bands/`.
pub fn run_band_study(spec: &ExperimentSpec) -> Result<Vec<BandRow>> {
    spec.validate()?;
    let grid = spec
        .band_study
        .as_ref()
        .ok_or_else(|| CliError::Config("spec has no band_study grid".into()))?;
    let out = spec.out_dir()?.to_path_buf();
    let prepared = prepare_all(spec)?;
    let per_seed: Vec<Vec<BandRow>> = prepared
        .par_iter()
        .map(|prep| band_study_seed(spec, grid, prep, &out))
        .collect::<Result<_>>()?;
    let rows: Vec<BandRow> = per_seed.into_iter().flatten().collect();

    let mut csv =
        String::from("seed,band,lo,hi,drop_top,drop_bottom,train_size,val_auc,test_auc\n");
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in &rows {
        let (name, b) = match r.band {
            Some(b) => (format!("[{},{})", b.lo, b.hi), b),
            None => (
                "baseline".to_owned(),
                BandSpec {
                    lo: 0.0,
                    hi: 1.0,
                    drop_top: 0.0,
                    drop_bottom: 0.0,
                },
            ),
        };
        let _ = writeln!(
            csv,
            "{},\"{}\",{},{},{},{},{},{},{}",
            r.seed,
            name,
            b.lo,
            b.hi,
            b.drop_top,
            b.drop_bottom,
            r.train_ids.len(),
            opt(r.val_auc),
            opt(r.test_auc)
        );
    }
    write_json(&out.join("spec.json"), spec)?;
    write_file(&out.join("bandstudy.csv"), csv.as_bytes())?;
    Ok(rows)
}

fn band_study_seed(
    spec: &ExperimentSpec,
    grid: &BandGrid,
    prep: &Prepared,
    out: &Path,
) -> Result<Vec<BandRow>> {
    let cfg = session_config(spec, Strategy::Uncertainty, prep.seed);
    let mut session = AlSession::seed_with_base(
        prep.dataset.clone(),
        prep.pool.clone(),
        cfg,
        prep.base.clone(),
    )
    .map_err(runtime("session"))?;
    session.train_committee().map_err(runtime("committee"))?;
    let cohort: Vec<SampleId> = prep.pool.training_cohort().into_iter().collect();
    let report = session.score_ids(&cohort).map_err(runtime("scoring"))?;

    let fit = |band: Option<BandSpec>, ids: Vec<SampleId>| -> Result<BandRow> {
        let (val_auc, test_auc) = if ids.is_empty() {
            (None, None)
        } else {
            let model = session.fit_final(&ids).map_err(runtime("band model"))?;
            session.evaluate(&model).map_err(runtime("evaluation"))?
        };
        Ok(BandRow {
            seed: prep.seed,
            band,
            train_ids: ids,
            val_auc,
            test_auc,
        })
    };

    let mut rows = vec![fit(None, cohort.clone())?];
    let mut members = String::from("band,sample_id\n");
    for &[lo, hi] in &grid.bands {
        let band = BandSpec {
            lo,
            hi,
            drop_top: grid.drop_top,
            drop_bottom: grid.drop_bottom,
        };
        let ids = band.apply(report.ranking()).map_err(runtime("band"))?;
        for id in &ids {
            let _ = writeln!(members, "\"[{lo},{hi})\",{id}");
        }
        rows.push(fit(Some(band), ids)?);
    }

    let dir = out.join("bands");
    let mut ranking = Vec::new();
    report
        .write_csv(&mut ranking)
        .map_err(|e| CliError::io(&dir, e))?;
    write_file(
        &dir.join(format!("seed{}_ranking.csv", prep.seed)),
        &ranking,
    )?;
    write_file(
        &dir.join(format!("seed{}_members.csv", prep.seed)),
        members.as_bytes(),
    )?;
    Ok(rows)
}
