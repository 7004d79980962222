use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    stream, BudgetLedger, EngineError, Oracle, OracleKind, Phase, Result, SelectionBase,
    SelectionScope, SessionConfig, Strategy,
};
use crate::data::{Dataset, PoolState, SampleId};
use crate::matrix::Matrix;
use crate::metrics::{auc, MetricsError, RoundRecord};
use crate::model::{fine_tune, Classifier, ModelConfig, TrainConfig};
use crate::uncertainty::UncertaintyReport;
use crate::util::{ceil_count, derive_seed};

/// One oracle answer, in the order it was applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub round: usize,
    pub sample_id: SampleId,
    pub label: usize,
}

/// Read-only projection of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub phase: Phase,
    pub round: usize,
    pub rounds: usize,
    pub strategy: Strategy,
    pub oracle: OracleKind,
    pub pending_count: usize,
    pub labeled_count: usize,
    pub unlabeled_count: usize,
    pub class_count: usize,
    pub budget: BudgetLedger,
    pub latest: Option<RoundRecord>,
}

/// State of one active-learning run over a fixed dataset.
///
/// Phases advance `SEEDING → TRAINING → SCORING → AWAITING_LABELS → TRAINING → … → DONE`;
/// every operation checks the phase before touching any state.
#[derive(Debug, Clone)]
pub struct AlSession {
    pub(super) config: SessionConfig,
    pub(super) dataset: Arc<Dataset>,
    pub(super) pool: PoolState,
    pub(super) labels: BTreeMap<SampleId, usize>,
    pub(super) round: usize,
    pub(super) phase: Phase,
    pub(super) base: Classifier,
    pub(super) committee: Vec<Classifier>,
    pub(super) final_model: Option<Classifier>,
    pub(super) report: Option<UncertaintyReport>,
    pub(super) pending: Vec<SampleId>,
    pub(super) batch_answered: usize,
    pub(super) budget: BudgetLedger,
    pub(super) history: Vec<RoundRecord>,
    pub(super) transcript: Vec<QueryRecord>,
}

impl AlSession {
    /// Seeds a session from a freshly initialised model.
    pub fn seed(dataset: Arc<Dataset>, pool: PoolState, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let base = Classifier::init(ModelConfig {
            architecture: config.architecture,
            class_count: dataset.class_count(),
            feature_count: dataset.feature_count(),
            seed: derive_seed(config.seed, &[stream::MODEL_INIT]),
        })?;
        Self::seed_with_base(dataset, pool, config, base)
    }

    /// Seeds a session that fine-tunes from `base` (e.g. a model pretrained on a source task).
    ///
    /// `⌈initial_fraction · N⌉` cohort samples, drawn uniformly, form the labeled seed set.
    pub fn seed_with_base(
        dataset: Arc<Dataset>,
        pool: PoolState,
        config: SessionConfig,
        base: Classifier,
    ) -> Result<Self> {
        config.validate()?;
        let mc = base.config();
        if mc.feature_count != dataset.feature_count() || mc.class_count != dataset.class_count() {
            return Err(EngineError::InvalidConfig(format!(
                "base model is {}→{}, dataset is {}→{}",
                mc.feature_count,
                mc.class_count,
                dataset.feature_count(),
                dataset.class_count()
            )));
        }
        let cohort = pool.training_cohort();
        if cohort.is_empty() {
            return Err(EngineError::EmptyCohort);
        }
        if let Some(id) = cohort
            .iter()
            .chain(&pool.validation)
            .chain(&pool.test)
            .find(|&&id| !dataset.contains(id))
        {
            return Err(EngineError::InvalidConfig(format!(
                "pool references unknown sample {id}"
            )));
        }
        if !pool.is_disjoint() {
            return Err(EngineError::InvalidConfig("pool sets overlap".into()));
        }
        if config.oracle == OracleKind::Simulated {
            if let Some(&id) = cohort.iter().find(|&&id| dataset.label_of(id).is_none()) {
                return Err(EngineError::MissingGroundTruth(id));
            }
        }

        let n = cohort.len();
        let want = ceil_count(config.initial_fraction, n);
        let candidates: Vec<SampleId> = cohort
            .iter()
            .copied()
            .filter(|&id| dataset.label_of(id).is_some())
            .collect();
        if candidates.len() < want {
            return Err(EngineError::InvalidConfig(format!(
                "seed set needs {want} labeled samples, only {} of the cohort carry labels",
                candidates.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[stream::SEEDING]));
        let seeded: BTreeSet<SampleId> = candidates
            .into_iter()
            .choose_multiple(&mut rng, want)
            .into_iter()
            .collect();

        let labels = seeded
            .iter()
            .map(|&id| {
                (
                    id,
                    dataset.label_of(id).expect("seed candidates are labeled"),
                )
            })
            .collect();
        let pool = PoolState {
            unlabeled: cohort.difference(&seeded).copied().collect(),
            labeled: seeded,
            validation: pool.validation,
            test: pool.test,
        };
        let budget = BudgetLedger::new(n, pool.labeled.len());
        Ok(Self {
            config,
            dataset,
            pool,
            labels,
            round: 0,
            phase: Phase::Training,
            base,
            committee: Vec::new(),
            final_model: None,
            report: None,
            pending: Vec::new(),
            batch_answered: 0,
            budget,
            history: Vec::new(),
            transcript: Vec::new(),
        })
    }

    fn expect_phase(&self, expected: Phase) -> Result<()> {
        if self.phase != expected {
            return Err(EngineError::WrongPhase {
                expected,
                actual: self.phase,
            });
        }
        Ok(())
    }

    /// Features and labels of `ids` (ascending), preferring oracle answers over ground truth.
    fn labeled_data(&self, ids: &BTreeSet<SampleId>) -> Result<(Matrix, Vec<usize>)> {
        let mut y = Vec::with_capacity(ids.len());
        for &id in ids {
            let label = self
                .labels
                .get(&id)
                .copied()
                .or_else(|| self.dataset.label_of(id))
                .ok_or(EngineError::MissingGroundTruth(id))?;
            y.push(label);
        }
        let ids: Vec<SampleId> = ids.iter().copied().collect();
        Ok((self.dataset.gather(&ids), y))
    }

    fn member_config(&self, lr: f64, path: &[u64]) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            seed: derive_seed(self.config.seed, path),
            ..self.config.train
        }
    }

    /// Fine-tunes one committee member per learning rate from the shared base on the labeled set.
    pub fn train_committee(&mut self) -> Result<()> {
        self.expect_phase(Phase::Training)?;
        if self.pool.labeled.is_empty() {
            return Err(EngineError::EmptyLabeledSet);
        }
        let (x, y) = self.labeled_data(&self.pool.labeled)?;
        let configs: Vec<TrainConfig> = self
            .config
            .committee_lrs
            .iter()
            .enumerate()
            .map(|(k, &lr)| {
                self.member_config(lr, &[stream::COMMITTEE, self.round as u64, k as u64])
            })
            .collect();
        let base = &self.base;
        let committee: Vec<Classifier> = std::thread::scope(|s| {
            let handles: Vec<_> = configs
                .iter()
                .map(|cfg| {
                    let (x, y) = (&x, &y);
                    s.spawn(move || fine_tune(base, x, y, cfg))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("committee training thread panicked"))
                .collect::<std::result::Result<_, _>>()
        })?;
        self.committee = committee;
        self.phase = Phase::Scoring;
        Ok(())
    }

    /// Committee uncertainty for arbitrary ids of the dataset.
    pub fn score_ids(&self, ids: &[SampleId]) -> Result<UncertaintyReport> {
        if self.committee.len() < 2 {
            return Err(EngineError::WrongPhase {
                expected: Phase::Scoring,
                actual: self.phase,
            });
        }
        let x = self.dataset.gather(ids);
        let probs = self
            .committee
            .iter()
            .map(|m| m.predict_proba(&x))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(UncertaintyReport::from_committee(ids, &probs)?)
    }

    fn candidates(&self) -> Vec<SampleId> {
        match self.config.selection_scope {
            SelectionScope::UnlabeledPool => self.pool.unlabeled.iter().copied().collect(),
            SelectionScope::FullCohort => self.pool.training_cohort().into_iter().collect(),
        }
    }

    /// Scores the candidates with the committee and picks the next batch of queries.
    pub fn score_pool(&mut self) -> Result<()> {
        self.expect_phase(Phase::Scoring)?;
        let report = self.score_ids(&self.candidates())?;
        self.select_queries(report)
    }

    /// Picks queries from an externally supplied report (normally the one from [`Self::score_pool`]).
    ///
    /// The batch holds `⌈select_fraction · base⌉` candidates: the top of the ranking under
    /// `UNCERTAINTY`, a seeded uniform draw under `RANDOM`. Picks that are already labeled
    /// count as overlap and are not queried.
    pub fn select_queries(&mut self, report: UncertaintyReport) -> Result<()> {
        self.expect_phase(Phase::Scoring)?;
        let candidates = self.candidates();
        if let Some(&id) = candidates.iter().find(|&&id| report.get(id).is_none()) {
            return Err(EngineError::IncompleteReport(id));
        }
        let base = match self.config.selection_base {
            SelectionBase::Cohort => self.pool.cohort_size(),
            SelectionBase::Candidates => candidates.len(),
        };
        let count = ceil_count(self.config.select_fraction, base).min(candidates.len());
        let selected: Vec<SampleId> = match self.config.strategy {
            Strategy::Uncertainty => {
                let wanted: BTreeSet<SampleId> = candidates.iter().copied().collect();
                report
                    .ranking()
                    .iter()
                    .copied()
                    .filter(|id| wanted.contains(id))
                    .take(count)
                    .collect()
            }
            Strategy::Random => {
                let seed =
                    derive_seed(self.config.seed, &[stream::RANDOM_QUERY, self.round as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked = candidates.iter().copied().choose_multiple(&mut rng, count);
                picked.sort_unstable();
                picked
            }
        };
        let (pending, overlap): (Vec<SampleId>, Vec<SampleId>) = selected
            .into_iter()
            .partition(|id| self.pool.unlabeled.contains(id));
        self.budget.record_overlap(overlap.len());
        self.pending = pending;
        self.batch_answered = 0;
        self.report = Some(report);
        self.phase = Phase::AwaitingLabels;
        if self.pending.is_empty() {
            self.finish_round()?;
        }
        Ok(())
    }

    /// Applies oracle answers. The batch is validated as a whole before anything changes.
    ///
    /// Once no queries remain (or `retrain_after` answers arrived), the final model is
    /// retrained on every labeled sample and the round is recorded.
    pub fn submit_labels(&mut self, answers: &[(SampleId, usize)]) -> Result<()> {
        self.expect_phase(Phase::AwaitingLabels)?;
        let pending: BTreeSet<SampleId> = self.pending.iter().copied().collect();
        let mut seen = BTreeSet::new();
        let class_count = self.dataset.class_count();
        for &(id, label) in answers {
            if !pending.contains(&id) || !seen.insert(id) {
                return Err(EngineError::UnexpectedSample(id));
            }
            if label >= class_count {
                return Err(EngineError::InvalidLabel {
                    id,
                    label,
                    class_count,
                });
            }
        }

        for &(id, label) in answers {
            self.pool.unlabeled.remove(&id);
            self.pool.labeled.insert(id);
            self.labels.insert(id, label);
            self.transcript.push(QueryRecord {
                round: self.round + 1,
                sample_id: id,
                label,
            });
        }
        self.pending.retain(|id| !seen.contains(id));
        self.batch_answered += answers.len();
        self.budget
            .record_answers(answers.len(), self.pool.labeled.len());

        let threshold_hit = self
            .config
            .retrain_after
            .is_some_and(|t| self.batch_answered >= t);
        if self.pending.is_empty() || threshold_hit {
            self.finish_round()?;
        }
        Ok(())
    }

    /// Trains a model from the base on `ids` with the final-model settings of the current round.
    pub fn fit_final(&self, ids: &[SampleId]) -> Result<Classifier> {
        let ids: BTreeSet<SampleId> = ids.iter().copied().collect();
        if ids.is_empty() {
            return Err(EngineError::EmptyLabeledSet);
        }
        let (x, y) = self.labeled_data(&ids)?;
        let cfg = self.member_config(
            self.config.final_learning_rate(),
            &[stream::FINAL, self.round as u64],
        );
        Ok(fine_tune(&self.base, &x, &y, &cfg)?)
    }

    /// Binary AUC on a held-out id set, using class 1's probability as the score.
    /// `None` for multiclass data or when the set lacks one of the classes.
    pub fn evaluate_on(&self, model: &Classifier, ids: &BTreeSet<SampleId>) -> Result<Option<f64>> {
        if self.dataset.class_count() != 2 {
            return Ok(None);
        }
        let known: Vec<(SampleId, usize)> = ids
            .iter()
            .filter_map(|&id| self.dataset.label_of(id).map(|l| (id, l)))
            .collect();
        let x = self
            .dataset
            .gather(&known.iter().map(|k| k.0).collect::<Vec<_>>());
        let probs = model.predict_proba(&x)?;
        let labels: Vec<bool> = known.iter().map(|k| k.1 == 1).collect();
        let scores: Vec<f64> = probs.iter_rows().map(|r| r[1]).collect();
        match auc(&labels, &scores) {
            Ok(a) => Ok(Some(a)),
            Err(MetricsError::SingleClass(_)) => Ok(None),
            Err(e) => Err(EngineError::InvalidConfig(e.to_string())),
        }
    }

    /// `(validation AUC, test AUC)` of `model`.
    pub fn evaluate(&self, model: &Classifier) -> Result<(Option<f64>, Option<f64>)> {
        Ok((
            self.evaluate_on(model, &self.pool.validation)?,
            self.evaluate_on(model, &self.pool.test)?,
        ))
    }

    fn finish_round(&mut self) -> Result<()> {
        let labeled: Vec<SampleId> = self.pool.labeled.iter().copied().collect();
        let model = self.fit_final(&labeled)?;
        let (val_auc, test_auc) = self.evaluate(&model)?;
        self.pending.clear();
        self.batch_answered = 0;
        self.final_model = Some(model);
        self.round += 1;
        self.history.push(RoundRecord {
            round: self.round,
            labeled_count: self.pool.labeled.len(),
            val_auc,
            test_auc,
            savings: self.budget.savings_fraction,
        });
        let target_hit = matches!((self.config.auc_target, val_auc), (Some(t), Some(v)) if v >= t);
        self.phase =
            if self.round >= self.config.rounds || self.pool.unlabeled.is_empty() || target_hit {
                Phase::Done
            } else {
                Phase::Training
            };
        Ok(())
    }

    /// Runs the automatic phases until the session waits for labels or is done.
    pub fn advance(&mut self) -> Result<()> {
        loop {
            match self.phase {
                Phase::Training => self.train_committee()?,
                Phase::Scoring => self.score_pool()?,
                Phase::Seeding | Phase::AwaitingLabels | Phase::Done => return Ok(()),
            }
        }
    }

    /// Drives the loop to completion, answering every query from `oracle`.
    pub fn run_to_completion(&mut self, oracle: &dyn Oracle) -> Result<()> {
        loop {
            self.advance()?;
            match self.phase {
                Phase::Done => return Ok(()),
                Phase::AwaitingLabels => {
                    let answers = self
                        .pending
                        .iter()
                        .map(|&id| {
                            oracle
                                .label(id)
                                .map(|l| (id, l))
                                .ok_or(EngineError::MissingGroundTruth(id))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    self.submit_labels(&answers)?;
                }
                _ => unreachable!("advance stops only when waiting or done"),
            }
        }
    }

    pub fn budget_report(&self) -> BudgetLedger {
        self.budget
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            phase: self.phase,
            round: self.round,
            rounds: self.config.rounds,
            strategy: self.config.strategy,
            oracle: self.config.oracle,
            pending_count: self.pending.len(),
            labeled_count: self.pool.labeled.len(),
            unlabeled_count: self.pool.unlabeled.len(),
            class_count: self.dataset.class_count(),
            budget: self.budget,
            latest: self.history.last().cloned(),
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn pool(&self) -> &PoolState {
        &self.pool
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn base(&self) -> &Classifier {
        &self.base
    }

    pub fn committee(&self) -> &[Classifier] {
        &self.committee
    }

    pub fn final_model(&self) -> Option<&Classifier> {
        self.final_model.as_ref()
    }

    pub fn report(&self) -> Option<&UncertaintyReport> {
        self.report.as_ref()
    }

    /// Outstanding queries, most informative first.
    pub fn pending_queries(&self) -> &[SampleId] {
        &self.pending
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.history
    }

    pub fn transcript(&self) -> &[QueryRecord] {
        &self.transcript
    }

    pub fn labels(&self) -> &BTreeMap<SampleId, usize> {
        &self.labels
    }
}
