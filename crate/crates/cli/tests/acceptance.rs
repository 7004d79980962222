//! Acceptance suite: one PASS/FAIL line per criterion, each with a wall-clock limit.
//! Runs as a plain binary (`harness = false`) and exits non-zero on any failure.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use alloop_cli::{run_band_study, run_experiment, ExperimentSpec};
use alloop_core::data::{generate_synthetic, write_csv, PoolState, SampleId};
use alloop_core::engine::{
    AlSession, Phase, SelectionScope, SessionConfig, SimulatedOracle, Strategy,
};
use alloop_core::metrics::{auc, roc_curve};
use alloop_core::model::{Architecture, Classifier, ModelConfig, TrainConfig};
use alloop_core::uncertainty::{
    band_filter, entropy, kl_divergence, rank_descending, select_band, select_top,
    uncertainty_score, ScoreBreakdown, UncertaintyReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
/// Name, wall-clock limit in seconds, check.
type Criterion = (&'static str, f64, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn random_dist(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    // Occasional exact zeros exercise the 0 · ln 0 convention.
    let raw: Vec<f64> = (0..c)
        .map(|_| {
            if rng.random_bool(0.1) {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        let mut d = vec![0.0; c];
        d[0] = 1.0;
        return d;
    }
    raw.iter().map(|v| v / total).collect()
}

#[allow(clippy::approx_constant)]
fn numeric_kernel() -> Outcome {
    let e = |p: &[f64]| entropy(p).map_err(|e| e.to_string());
    ensure!(close(e(&[0.5, 0.5])?, 0.693147, 1e-6), "H(0.5, 0.5)");
    ensure!(e(&[1.0, 0.0])? == 0.0, "H(1, 0)");
    ensure!(close(e(&[0.25; 4])?, 1.386294, 1e-6), "H(uniform 4)");
    let kl = |p: &[f64], q: &[f64]| kl_divergence(p, q).map_err(|e| e.to_string());
    ensure!(
        close(kl(&[0.75, 0.25], &[0.5, 0.5])?, 0.130812, 1e-6),
        "KL(0.75,0.25 || 0.5,0.5)"
    );
    ensure!(
        close(kl(&[0.5, 0.5], &[0.75, 0.25])?, 0.143841, 1e-6),
        "KL(0.5,0.5 || 0.75,0.25)"
    );
    ensure!(
        close(kl(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5])?, 0.0, 1e-9),
        "KL(p || p)"
    );

    let s = uncertainty_score(&[[0.5, 0.5]; 3]).map_err(|e| e.to_string())?;
    ensure!(
        close(s.score, 2.079442, 1e-6) && s.kl_sum == 0.0,
        "uniform committee {s:?}"
    );
    let s = uncertainty_score(&[[1.0, 0.0]; 3]).map_err(|e| e.to_string())?;
    ensure!(s.score == 0.0, "delta committee {s:?}");
    let mixed = [[0.9, 0.1], [0.5, 0.5], [0.1, 0.9]];
    let s = uncertainty_score(&mixed).map_err(|e| e.to_string())?;
    ensure!(
        close(s.score, oracle_score(&mixed.map(|d| d.to_vec())), 1e-9),
        "mixed committee"
    );

    let rank = |v: &[(SampleId, f64)]| rank_descending(v.iter().copied()).unwrap();
    let ids = |v: &[SampleId]| v.to_vec();
    ensure!(
        rank(&[(0, 5.0), (1, 3.0), (2, 9.0), (3, 1.0)]) == ids(&[2, 0, 1, 3]),
        "rank order"
    );
    ensure!(
        rank(&[(0, 2.0), (1, 2.0), (2, 1.0)]) == ids(&[0, 1, 2]),
        "rank tie-break"
    );
    ensure!(rank(&[]).is_empty(), "rank empty");

    let ten = ids(&(0..10).collect::<Vec<_>>());
    ensure!(
        select_top(&ten, 0.30, 10).unwrap() == ten[..3],
        "top 30% of 10"
    );
    ensure!(select_top(&ten, 1.0, 10).unwrap() == ten, "top 100%");
    ensure!(
        select_top(&ten[..7], 0.30, 7).unwrap().len() == 3,
        "ceiling rule"
    );
    ensure!(
        band_filter(&ten, 0.1, 0.1).unwrap() == ten[1..9],
        "drop 10%/10%"
    );
    ensure!(band_filter(&ten, 0.0, 0.0).unwrap() == ten, "drop nothing");
    ensure!(
        select_band(&ten, 0.3, 0.6).unwrap() == ten[3..6],
        "band [0.3, 0.6)"
    );
    for n in 1..=100u64 {
        let r = ids(&(0..n).collect::<Vec<_>>());
        let want: Vec<SampleId> = (0..n)
            .filter(|&i| {
                let q = i as f64 / n as f64;
                (0.3..0.6).contains(&q)
            })
            .collect();
        ensure!(
            select_band(&r, 0.3, 0.6).unwrap() == want,
            "band [0.3, 0.6) of {n}"
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let c = rng.random_range(2..=10);
        let (p, q) = (random_dist(&mut rng, c), random_dist(&mut rng, c));
        let k = kl(&p, &q)?;
        ensure!(k >= -1e-12, "Gibbs inequality violated: {k}");
        let h = e(&p)?;
        ensure!(
            h >= 0.0 && h <= (c as f64).ln() + 1e-12,
            "entropy {h} outside [0, ln {c}]"
        );
    }
    Ok("closed forms within 1e-6; 1000 random Gibbs/entropy-bound checks".into())
}

/// Written from the definition with no shared code.
#[allow(clippy::needless_range_loop)]
fn oracle_score(dists: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for p in dists {
        for &pi in p {
            if pi > 0.0 {
                total -= pi * pi.ln();
            }
        }
    }
    for i in 0..dists.len() {
        for j in 0..dists.len() {
            if i == j {
                continue;
            }
            let mut kl = 0.0;
            for c in 0..dists[i].len() {
                let (p, q) = (dists[i][c], dists[j][c]);
                if p > 0.0 {
                    kl += p * (p / (q + 1e-12)).ln();
                }
            }
            total += kl.max(0.0);
        }
    }
    total
}

fn score_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for case in 0..500 {
        let k = rng.random_range(2..=6);
        let c = rng.random_range(2..=10);
        let dists: Vec<Vec<f64>> = (0..k).map(|_| random_dist(&mut rng, c)).collect();
        let got = uncertainty_score(&dists).map_err(|e| e.to_string())?;
        let want = oracle_score(&dists);
        let err = (got.score - want).abs();
        worst = worst.max(err);
        ensure!(
            err <= 1e-9,
            "case {case}: score {} vs oracle {want}",
            got.score
        );
        ensure!(
            got.score == got.entropy_sum + got.kl_sum,
            "case {case}: score is not the sum of its parts"
        );
    }
    Ok(format!("500 committees, max |diff| {worst:.1e}"))
}

fn pairwise_auc(labels: &[bool], scores: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..200 {
        let n = rng.random_range(2..=50);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        // A coarse grid produces ties.
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..20) as f64 / 10.0)
            .collect();
        let brute = pairwise_auc(&labels, &scores);
        let a = auc(&labels, &scores).map_err(|e| e.to_string())?;
        let trapezoid = roc_curve(&labels, &scores)
            .map_err(|e| e.to_string())?
            .area();
        ensure!(
            close(a, brute, 1e-12),
            "case {case}: auc {a} vs pairwise {brute}"
        );
        ensure!(
            close(trapezoid, brute, 1e-12),
            "case {case}: trapezoid {trapezoid} vs pairwise {brute}"
        );
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        ensure!(
            close(a + auc(&labels, &neg).unwrap(), 1.0, 1e-12),
            "case {case}: complement"
        );
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 2.0).collect();
        ensure!(
            close(auc(&labels, &exp).unwrap(), a, 1e-12),
            "case {case}: exp transform"
        );
        ensure!(
            close(auc(&labels, &affine).unwrap(), a, 1e-12),
            "case {case}: affine transform"
        );
    }
    Ok(
        "200 instances: trapezoid = pairwise within 1e-12; complement and monotone invariance"
            .into(),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let d = rng.random_range(1..=5);
        let c = rng.random_range(2..=3);
        let architecture = if case % 2 == 0 {
            Architecture::Linear
        } else {
            Architecture::Mlp {
                hidden_units: rng.random_range(1..=4),
            }
        };
        let model = Classifier::init(ModelConfig {
            architecture,
            class_count: c,
            feature_count: d,
            seed: case,
        })
        .map_err(|e| e.to_string())?;
        let n = rng.random_range(1..=8);
        let x = alloop_core::Matrix::from_vec(
            n,
            d,
            (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect(),
        );
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let (_, grads) = model.loss_and_gradient(&x, &y).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = grads
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
            .collect();
        let params = model.params();
        let h = 1e-5;
        for (i, &a) in analytic.iter().enumerate() {
            let mut probe = model.clone();
            let mut p = params.clone();
            p[i] += h;
            probe.set_params(&p).unwrap();
            let up = probe.loss(&x, &y).unwrap();
            p[i] -= 2.0 * h;
            probe.set_params(&p).unwrap();
            let down = probe.loss(&x, &y).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            ensure!(
                rel <= 1e-4,
                "model {case} param {i}: analytic {a} numeric {numeric}"
            );
        }
    }
    Ok(format!("20 models, max relative error {worst:.1e}"))
}

/// Cohort of exactly `n` ids plus 10 validation and 10 test ids.
fn budget_session(n: usize, seed: u64, config: SessionConfig) -> Result<AlSession, String> {
    let ds = generate_synthetic((n + 20) / 2, &[vec![-1.0, 0.0], vec![1.0, 0.0]], 1.0, seed)
        .map_err(|e| e.to_string())?;
    let ids = ds.ids().to_vec();
    let pool = PoolState {
        unlabeled: ids[..n].iter().copied().collect(),
        validation: ids[n..n + 10].iter().copied().collect(),
        test: ids[n + 10..].iter().copied().collect(),
        ..PoolState::default()
    };
    AlSession::seed(Arc::new(ds), pool, config).map_err(|e| e.to_string())
}

fn budget_arithmetic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let fast = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let mut seen = BTreeSet::new();
    for case in 0..50u64 {
        let n = 10 * rng.random_range(3..=40);
        let strategy = if case % 2 == 0 {
            Strategy::Uncertainty
        } else {
            Strategy::Random
        };
        let config = SessionConfig {
            strategy,
            seed: case,
            train: fast,
            ..SessionConfig::default()
        };
        let mut s = budget_session(n, case, config)?;
        let ds = s.dataset().clone();
        s.run_to_completion(&SimulatedOracle::new(&ds))
            .map_err(|e| e.to_string())?;
        let b = s.budget_report();
        let frac = b.distinct_labeled as f64 / n as f64;
        ensure!(
            (0.30..=0.60).contains(&frac),
            "session {case} (N={n}): labeled fraction {frac}"
        );
        ensure!(
            (0.40..=0.70).contains(&b.savings_fraction),
            "session {case}: savings {}",
            b.savings_fraction
        );
        // Selecting only from the unlabeled pool can never overlap the seed set.
        ensure!(
            b.savings_fraction == 0.4,
            "session {case}: zero-overlap savings {}",
            b.savings_fraction
        );
        seen.insert(n);
    }

    let mut s = budget_session(
        100,
        99,
        SessionConfig {
            selection_scope: SelectionScope::FullCohort,
            train: fast,
            ..SessionConfig::default()
        },
    )?;
    s.train_committee().map_err(|e| e.to_string())?;
    let seed_set = s.pool().labeled.clone();
    let report = UncertaintyReport::from_scores(s.pool().training_cohort().into_iter().map(|id| {
        let v = if seed_set.contains(&id) { 2.0 } else { 1.0 };
        (
            id,
            ScoreBreakdown {
                entropy_sum: v,
                kl_sum: 0.0,
                score: v,
            },
        )
    }))
    .map_err(|e| e.to_string())?;
    s.select_queries(report).map_err(|e| e.to_string())?;
    ensure!(
        s.phase() == Phase::Done,
        "full-overlap session left in {:?}",
        s.phase()
    );
    let full = s.budget_report().savings_fraction;
    ensure!(full == 0.7, "full-overlap savings {full}");
    Ok(format!(
        "50 sessions over {} cohort sizes in [0.40, 0.70]; zero overlap 0.40, full overlap 0.70",
        seen.len()
    ))
}

/// Two overlapping unit-variance Gaussians with Bayes error Φ(−1.2816) = 10%, pretrained
/// on the same task rotated by 30 degrees.
fn benefit_spec(out: &Path) -> ExperimentSpec {
    let mu = 1.2816_f64;
    let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
    ExperimentSpec::from_json(&format!(
        r#"{{
            "dataset": {{ "kind": "synthetic", "n_per_class": 1500, "means": [[{a}, 0.0], [{mu}, 0.0]], "stddev": 1.0 }},
            "split": {{ "train_fraction": 0.6666666666666667, "validation_fraction": 0.16666666666666666, "test_fraction": 0.16666666666666666 }},
            "pretrain": {{
                "dataset": {{ "kind": "synthetic", "n_per_class": 1000, "means": [[{sa}, {sb}], [{sc}, {sd}]], "stddev": 1.0 }},
                "train": {{ "learning_rate": 0.01, "epochs": 10, "batch_size": 16 }}
            }},
            "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
            "out": {out:?}
        }}"#,
        a = -mu,
        sa = -mu * c,
        sb = -mu * s,
        sc = mu * c,
        sd = mu * s,
    ))
    .expect("benefit spec")
}

fn strategy_benefit() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = benefit_spec(dir.path());
    let outcome = run_experiment(&spec).map_err(|e| e.to_string())?;
    let cohort = outcome.runs[0].cohort_size;
    ensure!(cohort == 2000, "cohort of {cohort}, expected 2000");
    let cmp = outcome.comparison.ok_or("no comparison")?;
    let row = cmp
        .row("UNCERTAINTY", 1)
        .ok_or("no round-1 comparison row")?;
    let diff = row.mean_diff.ok_or("no paired difference")?;
    let wins = row.sign_count.ok_or("no sign count")?;
    let detail = format!(
        "mean test AUC {:.4} vs {:.4}, diff {diff:+.5}, sign test {wins}/{}",
        row.mean_test_auc.unwrap_or(f64::NAN),
        cmp.row("RANDOM", 1)
            .and_then(|r| r.mean_test_auc)
            .unwrap_or(f64::NAN),
        row.n_pairs
    );
    ensure!(row.n_pairs == 10, "{detail}: expected 10 pairs");
    ensure!(diff > 0.0 && wins >= 7, "{detail}");
    Ok(detail)
}

fn band_spec(out: &Path, bands: &str, drop: f64) -> ExperimentSpec {
    ExperimentSpec::from_json(&format!(
        r#"{{
            "dataset": {{ "kind": "synthetic", "n_per_class": 400, "means": [[-1.0, 0.0], [1.0, 0.0]], "stddev": 1.0 }},
            "session": {{ "train": {{ "epochs": 10 }} }},
            "seeds": [0, 1, 2],
            "band_study": {{ "bands": {bands}, "drop_top": {drop}, "drop_bottom": {drop} }},
            "out": {out:?}
        }}"#
    ))
    .expect("band spec")
}

fn band_study() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rows = run_band_study(&band_spec(
        &dir.path().join("a"),
        "[[0, 1], [0, 0.25], [0.25, 0.5], [0.5, 0.75], [0.75, 1]]",
        0.0,
    ))
    .map_err(|e| e.to_string())?;
    for seed in 0..3 {
        let mine: Vec<_> = rows.iter().filter(|r| r.seed == seed).collect();
        ensure!(mine.len() == 6, "seed {seed}: {} rows", mine.len());
        let (base, full) = (mine[0], mine[1]);
        ensure!(
            base.band.is_none(),
            "seed {seed}: first row is not the baseline"
        );
        let bits = |v: Option<f64>| v.map(f64::to_bits);
        ensure!(
            bits(full.test_auc) == bits(base.test_auc) && bits(full.val_auc) == bits(base.val_auc),
            "seed {seed}: full band AUC {:?} vs baseline {:?}",
            full.test_auc,
            base.test_auc
        );
        let mut full_ids = full.train_ids.clone();
        full_ids.sort_unstable();
        ensure!(
            full_ids == base.train_ids,
            "seed {seed}: full band trains on different samples"
        );
        let mut union = Vec::new();
        for r in &mine[2..] {
            union.extend(r.train_ids.iter().copied());
        }
        let distinct: BTreeSet<SampleId> = union.iter().copied().collect();
        ensure!(
            distinct.len() == union.len(),
            "seed {seed}: quartile bands overlap"
        );
        ensure!(
            distinct.into_iter().collect::<Vec<_>>() == base.train_ids,
            "seed {seed}: quartiles do not cover the cohort"
        );
    }

    let rows = run_band_study(&band_spec(&dir.path().join("b"), "[[0, 1]]", 0.1))
        .map_err(|e| e.to_string())?;
    for pair in rows.chunks(2) {
        let n = pair[0].train_ids.len();
        let kept = pair[1].train_ids.len();
        ensure!(
            kept == n - 2 * (n / 10),
            "seed {}: kept {kept} of {n} after 10%/10% drops",
            pair[0].seed
        );
    }
    let n = rows[0].train_ids.len();
    Ok(format!("3 seeds: full band bit-identical to baseline, quartiles partition {n} ids, trimming keeps {}", n - 2 * (n / 10)))
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec_for = |out: PathBuf| {
        ExperimentSpec::from_json(&format!(
            r#"{{
                "dataset": {{ "kind": "synthetic", "n_per_class": 300, "means": [[-1.0, 0.0], [1.0, 0.5]], "stddev": 1.0 }},
                "session": {{ "rounds": 2, "train": {{ "epochs": 10 }} }},
                "seeds": [0, 1, 2],
                "out": {out:?}
            }}"#
        ))
        .expect("determinism spec")
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_experiment(&spec_for(a.clone())).map_err(|e| e.to_string())?;
    run_experiment(&spec_for(b.clone())).map_err(|e| e.to_string())?;
    let (ta, tb) = (tree(&a), tree(&b));
    ensure!(ta.len() == tb.len(), "{} files vs {}", ta.len(), tb.len());
    for ((pa, ba), (pb, bb)) in ta.iter().zip(&tb) {
        ensure!(pa == pb, "file sets differ at {}", pa.display());
        ensure!(ba == bb, "{} differs", pa.display());
    }
    let bytes: usize = ta.iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{} files, {bytes} bytes identical", ta.len()))
}

struct Server {
    child: Child,
    addr: String,
}

impl Server {
    fn start(data_dir: &Path) -> Result<Self, String> {
        let mut child = Command::new(env!("CARGO_BIN_EXE_alloop"))
            .args(["--quiet", "serve", "--addr", "127.0.0.1:0", "--data-dir"])
            .arg(data_dir)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| format!("spawn: {e}"))?;
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .map_err(|e| e.to_string())?;
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .ok_or_else(|| format!("unexpected first line {line:?}"))?
            .to_owned();
        Ok(Self { child, addr })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn request(
        &self,
        method: &str,
        path: &str,
        content_type: &str,
        body: &[u8],
    ) -> Result<(u16, Vec<u8>), String> {
        let mut stream = TcpStream::connect(&self.addr).map_err(|e| e.to_string())?;
        stream.set_read_timeout(Some(Duration::from_secs(20))).ok();
        let head = format!(
            "{method} {path} HTTP/1.1\r\nHost: {}\r\nConnection: close\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\n\r\n",
            self.addr,
            body.len()
        );
        stream
            .write_all(head.as_bytes())
            .map_err(|e| e.to_string())?;
        stream.write_all(body).map_err(|e| e.to_string())?;
        let mut raw = Vec::new();
        stream.read_to_end(&mut raw).map_err(|e| e.to_string())?;
        let split = raw
            .windows(4)
            .position(|w| w == b"\r\n\r\n")
            .ok_or("response without header terminator")?;
        let status_line = String::from_utf8_lossy(&raw[..split])
            .lines()
            .next()
            .unwrap_or_default()
            .to_owned();
        let status = status_line
            .split_whitespace()
            .nth(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad status line {status_line:?}"))?;
        Ok((status, raw[split + 4..].to_vec()))
    }

    fn json(
        &self,
        method: &str,
        path: &str,
        body: Option<serde_json::Value>,
    ) -> Result<(u16, serde_json::Value, Vec<u8>), String> {
        let bytes = body.map(|b| b.to_string().into_bytes()).unwrap_or_default();
        let (status, raw) = self.request(method, path, "application/json", &bytes)?;
        let value = serde_json::from_slice(&raw).map_err(|e| format!("{method} {path}: {e}"))?;
        Ok((status, value, raw))
    }
}

fn service_crash_safety() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = generate_synthetic(50, &[vec![-1.0, 0.0], vec![1.0, 0.0]], 1.0, 3)
        .map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    write_csv(&ds, &mut csv, "label").map_err(|e| e.to_string())?;

    let server = Server::start(dir.path())?;
    let result = (|| {
        let boundary = "acceptance-boundary";
        let mut body = format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"data.csv\"\r\nContent-Type: text/csv\r\n\r\n"
        )
        .into_bytes();
        body.extend_from_slice(&csv);
        body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
        let (status, raw) = server.request(
            "POST",
            "/api/datasets",
            &format!("multipart/form-data; boundary={boundary}"),
            &body,
        )?;
        ensure!(
            status == 201,
            "upload returned {status}: {}",
            String::from_utf8_lossy(&raw)
        );
        let created: serde_json::Value = serde_json::from_slice(&raw).map_err(|e| e.to_string())?;
        let dataset_id = created["dataset_id"]
            .as_str()
            .ok_or("no dataset_id")?
            .to_owned();

        let config = serde_json::json!({ "oracle": "HUMAN", "train": { "epochs": 5 } });
        let (status, session, _) = server.json(
            "POST",
            "/api/sessions",
            Some(serde_json::json!({ "dataset_id": dataset_id, "config": config })),
        )?;
        ensure!(
            status == 201,
            "session creation returned {status}: {session}"
        );
        let sid = session["session_id"]
            .as_str()
            .ok_or("no session_id")?
            .to_owned();

        let (_, queue, _) =
            server.json("GET", &format!("/api/sessions/{sid}/queue?limit=10"), None)?;
        let items = queue["items"].as_array().ok_or("queue has no items")?;
        ensure!(items.len() == 10, "queue returned {} items", items.len());
        let answers: Vec<serde_json::Value> = items
            .iter()
            .map(|it| {
                let id = it["sample_id"].as_u64().unwrap();
                let label = ds.label_of(id).unwrap();
                serde_json::json!({ "sample_id": id, "label": label })
            })
            .collect();
        let (status, body, _) = server.json(
            "POST",
            &format!("/api/sessions/{sid}/labels"),
            Some(answers.into()),
        )?;
        ensure!(status == 200, "labeling returned {status}: {body}");
        let (_, before, before_raw) = server.json("GET", &format!("/api/sessions/{sid}"), None)?;
        let (_, _, queue_before) =
            server.json("GET", &format!("/api/sessions/{sid}/queue"), None)?;
        Ok((sid, before, before_raw, queue_before))
    })();
    server.kill();
    let (sid, before, before_raw, queue_before) = result?;

    let server = Server::start(dir.path())?;
    let after = (|| {
        let (status, _, raw) = server.json("GET", &format!("/api/sessions/{sid}"), None)?;
        let (_, _, queue) = server.json("GET", &format!("/api/sessions/{sid}/queue"), None)?;
        Ok::<_, String>((status, raw, queue))
    })();
    server.kill();
    let (status, after_raw, queue_after) = after?;
    ensure!(status == 200, "status after restart returned {status}");
    ensure!(
        after_raw == before_raw,
        "status changed across restart:\n{}\n{}",
        String::from_utf8_lossy(&before_raw),
        String::from_utf8_lossy(&after_raw)
    );
    ensure!(queue_after == queue_before, "queue changed across restart");
    Ok(format!(
        "status identical after SIGKILL and restart (phase {}, {} pending)",
        before["phase"], before["pending_count"]
    ))
}

fn main() {
    // Cargo passes harness flags such as --nocapture; they do not apply here.
    let criteria: [Criterion; 9] = [
        ("numeric-kernel-exactness", 1.0, numeric_kernel),
        ("uncertainty-score-oracle", 1.0, score_oracle),
        ("auc-oracle", 5.0, auc_oracle),
        ("gradient-correctness", 5.0, gradient_check),
        ("budget-arithmetic", 60.0, budget_arithmetic),
        ("strategy-benefit", 120.0, strategy_benefit),
        ("band-study-sanity", 60.0, band_study),
        ("end-to-end-determinism", 120.0, determinism),
        ("service-crash-safety", 30.0, service_crash_safety),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let result = match result {
            Ok(_) if secs > limit => Err(format!("took {secs:.2} s, limit {limit} s")),
            other => other,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {name}: {detail} [{secs:.2} s / {limit} s]");
        if result.is_err() {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
