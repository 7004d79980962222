//! Committee uncertainty: per-member entropy plus pairwise KL divergence, ranking and banding.
//!
//! All quantities are in nats. For a committee of `K` members the score of a sample is
//! `Σ_k H(p_k) + Σ_{i≠j} KL(p_i ‖ p_j)`, summing KL over all `K(K−1)` ordered pairs.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SampleId;
use crate::matrix::Matrix;
use crate::util::{ceil_count, floor_count};

/// Smoothing added to KL denominators so a zero in `q` stays finite.
pub const KL_EPSILON: f64 = 1e-12;
/// Allowed deviation of a distribution's total from 1.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum UncertaintyError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("distribution lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("committee needs at least 2 members, got {0}")]
    CommitteeTooSmall(usize),
    #[error("sample {0} has a non-finite score")]
    NonFiniteScore(SampleId),
    #[error("invalid fraction: {0}")]
    InvalidFraction(String),
    #[error("invalid fractions: {0}")]
    InvalidFractions(String),
}

impl UncertaintyError {
    pub fn code(&self) -> &'static str {
        match self {
            UncertaintyError::InvalidDistribution(_) => "INVALID_DISTRIBUTION",
            UncertaintyError::LengthMismatch(..) => "LENGTH_MISMATCH",
            UncertaintyError::CommitteeTooSmall(_) => "COMMITTEE_TOO_SMALL",
            UncertaintyError::NonFiniteScore(_) => "NON_FINITE_SCORE",
            UncertaintyError::InvalidFraction(_) => "INVALID_FRACTION",
            UncertaintyError::InvalidFractions(_) => "INVALID_FRACTIONS",
        }
    }
}

pub type Result<T, E = UncertaintyError> = std::result::Result<T, E>;

/// A validated probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        validate(&p)?;
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for ProbDist {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn validate(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(UncertaintyError::InvalidDistribution("empty".into()));
    }
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(UncertaintyError::InvalidDistribution(format!("entry {v}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(UncertaintyError::InvalidDistribution(format!(
            "sums to {sum}"
        )));
    }
    Ok(())
}

fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// The smoothing term biases each summand by about `−ε`, so a raw sum can dip just
/// below zero for near-identical inputs; the result is clamped to `[0, ∞)`.
fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let raw: f64 = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / (qi + KL_EPSILON)).ln())
        .sum();
    raw.max(0.0)
}

/// Shannon entropy `−Σ p ln p`, with `0 · ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    validate(p)?;
    Ok(entropy_unchecked(p))
}

/// `KL(p ‖ q) = Σ p ln(p / (q + ε))`, terms with `p = 0` contribute nothing.
/// Never negative.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(UncertaintyError::LengthMismatch(p.len(), q.len()));
    }
    validate(p)?;
    validate(q)?;
    Ok(kl_unchecked(p, q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub entropy_sum: f64,
    pub kl_sum: f64,
    pub score: f64,
}

/// Committee uncertainty of one sample from its `K ≥ 2` member distributions.
pub fn uncertainty_score<P: AsRef<[f64]>>(dists: &[P]) -> Result<ScoreBreakdown> {
    if dists.len() < 2 {
        return Err(UncertaintyError::CommitteeTooSmall(dists.len()));
    }
    let c = dists[0].as_ref().len();
    for d in dists {
        let d = d.as_ref();
        if d.len() != c {
            return Err(UncertaintyError::LengthMismatch(c, d.len()));
        }
        validate(d)?;
    }
    let entropy_sum = dists
        .iter()
        .map(|d| entropy_unchecked(d.as_ref()))
        .sum::<f64>();
    let mut kl_sum = 0.0;
    for (i, p) in dists.iter().enumerate() {
        for (j, q) in dists.iter().enumerate() {
            if i != j {
                kl_sum += kl_unchecked(p.as_ref(), q.as_ref());
            }
        }
    }
    Ok(ScoreBreakdown {
        entropy_sum,
        kl_sum,
        score: entropy_sum + kl_sum,
    })
}

/// Orders ids by score, highest first; equal scores fall back to ascending id.
pub fn rank_descending<I>(scores: I) -> Result<Vec<SampleId>>
where
    I: IntoIterator<Item = (SampleId, f64)>,
{
    let mut pairs: Vec<(SampleId, f64)> = scores.into_iter().collect();
    if let Some((id, _)) = pairs.iter().find(|(_, s)| !s.is_finite()) {
        return Err(UncertaintyError::NonFiniteScore(*id));
    }
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(pairs.into_iter().map(|(id, _)| id).collect())
}

/// The first `⌈fraction · pool_size⌉` ids of `ranking` (never more than the ranking holds).
pub fn select_top(ranking: &[SampleId], fraction: f64, pool_size: usize) -> Result<Vec<SampleId>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(UncertaintyError::InvalidFraction(format!(
            "{fraction} not in (0, 1]"
        )));
    }
    if ranking.len() > pool_size {
        return Err(UncertaintyError::InvalidFraction(format!(
            "ranking of {} exceeds pool size {pool_size}",
            ranking.len()
        )));
    }
    let n = ceil_count(fraction, pool_size).min(ranking.len());
    Ok(ranking[..n].to_vec())
}

/// Drops the `⌊drop_top · n⌋` most and `⌊drop_bottom · n⌋` least uncertain ids of a
/// descending ranking.
pub fn band_filter(ranking: &[SampleId], drop_top: f64, drop_bottom: f64) -> Result<Vec<SampleId>> {
    check_drops(drop_top, drop_bottom)?;
    let n = ranking.len();
    let top = floor_count(drop_top, n);
    let bottom = floor_count(drop_bottom, n);
    Ok(ranking[top..n - bottom.min(n - top)].to_vec())
}

fn check_drops(drop_top: f64, drop_bottom: f64) -> Result<()> {
    let ok = |f: f64| (0.0..1.0).contains(&f);
    if !ok(drop_top) || !ok(drop_bottom) || drop_top + drop_bottom >= 1.0 {
        return Err(UncertaintyError::InvalidFractions(format!(
            "drop_top {drop_top} + drop_bottom {drop_bottom} must be < 1"
        )));
    }
    Ok(())
}

/// Index range `[start, end)` of positions `i` in a ranking of length `n` with
/// `lo ≤ i / n < hi`.
pub fn band_range(n: usize, lo: f64, hi: f64) -> Result<std::ops::Range<usize>> {
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(UncertaintyError::InvalidFractions(format!(
            "band [{lo}, {hi}) out of order or range"
        )));
    }
    let first_at_least = |t: f64| -> usize {
        if n == 0 {
            return 0;
        }
        let mut i = ((t * n as f64).ceil().max(0.0) as usize).min(n);
        while i > 0 && ((i - 1) as f64 / n as f64) >= t {
            i -= 1;
        }
        while i < n && (i as f64 / n as f64) < t {
            i += 1;
        }
        i
    };
    let start = first_at_least(lo);
    let end = first_at_least(hi).max(start);
    Ok(start..end)
}

/// Ids whose percentile position in `ranking` lies in `[lo, hi)`.
pub fn select_band(ranking: &[SampleId], lo: f64, hi: f64) -> Result<Vec<SampleId>> {
    Ok(ranking[band_range(ranking.len(), lo, hi)?].to_vec())
}

/// A percentile band over the ranking, with outlier trimming at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub drop_top: f64,
    #[serde(default)]
    pub drop_bottom: f64,
}

impl BandSpec {
    /// Band membership is decided on the full ranking; trimmed ids are then removed from it.
    pub fn apply(&self, ranking: &[SampleId]) -> Result<Vec<SampleId>> {
        check_drops(self.drop_top, self.drop_bottom)?;
        let n = ranking.len();
        let kept = floor_count(self.drop_top, n)..n - floor_count(self.drop_bottom, n);
        let band = band_range(n, self.lo, self.hi)?;
        Ok((band.start.max(kept.start)..band.end.min(kept.end))
            .map(|i| ranking[i])
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample_id: SampleId,
    /// One distribution per committee member.
    pub distributions: Vec<Vec<f64>>,
    pub breakdown: ScoreBreakdown,
}

/// Scores for a set of samples and their descending ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    entries: BTreeMap<SampleId, ScoredSample>,
    ranking: Vec<SampleId>,
}

impl UncertaintyReport {
    /// `member_probs[k]` holds member `k`'s distributions, one row per entry of `ids`.
    pub fn from_committee(ids: &[SampleId], member_probs: &[Matrix]) -> Result<Self> {
        if member_probs.len() < 2 {
            return Err(UncertaintyError::CommitteeTooSmall(member_probs.len()));
        }
        if let Some(m) = member_probs.iter().find(|m| m.rows() != ids.len()) {
            return Err(UncertaintyError::LengthMismatch(ids.len(), m.rows()));
        }
        let mut entries = BTreeMap::new();
        for (row, &id) in ids.iter().enumerate() {
            let distributions: Vec<Vec<f64>> =
                member_probs.iter().map(|m| m.row(row).to_vec()).collect();
            let breakdown = uncertainty_score(&distributions)?;
            entries.insert(
                id,
                ScoredSample {
                    sample_id: id,
                    distributions,
                    breakdown,
                },
            );
        }
        Self::from_entries(entries)
    }

    /// Builds a report from precomputed breakdowns (distributions left empty).
    pub fn from_scores<I: IntoIterator<Item = (SampleId, ScoreBreakdown)>>(
        scores: I,
    ) -> Result<Self> {
        let entries = scores
            .into_iter()
            .map(|(id, breakdown)| {
                (
                    id,
                    ScoredSample {
                        sample_id: id,
                        distributions: Vec::new(),
                        breakdown,
                    },
                )
            })
            .collect();
        Self::from_entries(entries)
    }

    fn from_entries(entries: BTreeMap<SampleId, ScoredSample>) -> Result<Self> {
        let ranking = rank_descending(entries.iter().map(|(&id, s)| (id, s.breakdown.score)))?;
        Ok(Self { entries, ranking })
    }

    pub fn ranking(&self) -> &[SampleId] {
        &self.ranking
    }

    pub fn get(&self, id: SampleId) -> Option<&ScoredSample> {
        self.entries.get(&id)
    }

    pub fn score(&self, id: SampleId) -> Option<f64> {
        self.entries.get(&id).map(|s| s.breakdown.score)
    }

    pub fn len(&self) -> usize {
        self.ranking.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranking.is_empty()
    }

    /// 1-based rank of each id.
    pub fn ranks(&self) -> BTreeMap<SampleId, usize> {
        self.ranking
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i + 1))
            .collect()
    }

    /// CSV with columns `sample_id,entropy_sum,kl_sum,score,rank`, one row per sample in rank order.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sample_id", "entropy_sum", "kl_sum", "score", "rank"])?;
        for (i, id) in self.ranking.iter().enumerate() {
            let b = &self.entries[id].breakdown;
            w.write_record([
                id.to_string(),
                b.entropy_sum.to_string(),
                b.kl_sum.to_string(),
                b.score.to_string(),
                (i + 1).to_string(),
            ])?;
        }
        w.flush()
    }
}
