//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero when any criterion fails.
//!
//! The quick tier runs by default. The training-heavy criteria run when
//! `DAMIC_ACCEPTANCE=full` is set; they take well over an hour on one core.
//! A positional argument restricts the run to criteria whose name contains it.
//! `DAMIC_MNIST_DIR` points at `images-idx3-ubyte` + `labels-idx1-ubyte`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use damic_core::damic::{
    agreement, assign_by_reconstruction, count_empty, damic_loss, fit, kmeans_equivalence_check, soft_assign,
    FitOutput, TrainConfig, TrainingMode,
};
use damic_core::data::{gen_synthetic, load_idx, Dataset, SyntheticSpec};
use damic_core::kmeans::{kmeans_fit, Centroids, KmeansConfig};
use damic_core::metrics::{acc, ari, nmi, Scores};
use damic_core::nn::{grad_check, Mode};
use damic_core::Matrix;
use damic_core::damic::DamicModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

struct Run {
    out: FitOutput,
    elapsed: Duration,
}

/// Expensive training runs, computed once and shared between criteria.
struct Lab {
    synthetic: Dataset,
    full: Vec<Option<Run>>,
    joint: Vec<Option<Run>>,
}

const SEEDS_REPRO: usize = 5;
const SEEDS_COLLAPSE: usize = 10;

impl Lab {
    fn new() -> Self {
        let synthetic = gen_synthetic(&SyntheticSpec::default()).expect("default synthetic").dataset;
        Self {
            synthetic,
            full: (0..SEEDS_COLLAPSE).map(|_| None).collect(),
            joint: (0..SEEDS_COLLAPSE).map(|_| None).collect(),
        }
    }

    fn truth(&self) -> &[usize] {
        self.synthetic.labels.as_deref().expect("synthetic has labels")
    }

    fn train(&self, seed: u64, mode: TrainingMode) -> Run {
        let cfg = TrainConfig {
            k: 4,
            seed,
            mode,
            ..TrainConfig::default()
        };
        let start = Instant::now();
        let out = fit(&self.synthetic.x, &cfg, None).expect("synthetic training");
        let elapsed = start.elapsed();
        let s = Scores::compute(self.truth(), &out.labels).unwrap();
        eprintln!(
            "    [{mode} seed {seed}] nmi {:.4} ari {:.4} acc {:.4} empty {} in {:.1}s",
            s.nmi,
            s.ari,
            s.acc,
            count_empty(&out.labels, 4),
            elapsed.as_secs_f64()
        );
        Run { out, elapsed }
    }

    fn full(&mut self, seed: usize) -> &Run {
        if self.full[seed].is_none() {
            self.full[seed] = Some(self.train(seed as u64, TrainingMode::Full));
        }
        self.full[seed].as_ref().unwrap()
    }

    fn joint(&mut self, seed: usize) -> &Run {
        if self.joint[seed].is_none() {
            self.joint[seed] = Some(self.train(seed as u64, TrainingMode::JointOnlyRandomInit));
        }
        self.joint[seed].as_ref().unwrap()
    }

    /// (full, DAE+KM, k-means) NMI per seed, plus full ARI and slowest run.
    fn reproduction_scores(&mut self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Duration) {
        let truth = self.truth().to_vec();
        let (mut full, mut init, mut km, mut full_ari) = (vec![], vec![], vec![], vec![]);
        let mut slowest = Duration::ZERO;
        for seed in 0..SEEDS_REPRO {
            let run = self.full(seed);
            slowest = slowest.max(run.elapsed);
            full.push(nmi(&truth, &run.out.labels).unwrap());
            full_ari.push(ari(&truth, &run.out.labels).unwrap());
            init.push(nmi(&truth, run.out.pseudo_labels.as_ref().unwrap()).unwrap());
            let cfg = KmeansConfig {
                seed: seed as u64,
                ..KmeansConfig::default()
            };
            let labels = kmeans_fit(&self.synthetic.x, 4, &cfg).unwrap().labels;
            km.push(nmi(&truth, &labels).unwrap());
        }
        (full, init, km, full_ari, slowest)
    }
}

fn synthetic_reproduction(lab: &mut Lab) -> Outcome {
    let (full, init, km, full_ari, slowest) = lab.reproduction_scores();
    let (mf, ma, mi, mk) = (mean(&full), mean(&full_ari), mean(&init), mean(&km));
    let checks = [
        (mf >= 0.90, format!("full NMI {mf:.4} >= 0.90 {}", fmt_list(&full))),
        (ma >= 0.90, format!("full ARI {ma:.4} >= 0.90 {}", fmt_list(&full_ari))),
        ((mi - 0.83).abs() <= 0.07, format!("DAE+KM NMI {mi:.4} in 0.83±0.07 {}", fmt_list(&init))),
        ((mk - 0.80).abs() <= 0.07, format!("k-means NMI {mk:.4} in 0.80±0.07 {}", fmt_list(&km))),
        (slowest.as_secs() <= 600, format!("slowest run {:.1}s <= 600s", slowest.as_secs_f64())),
    ];
    let ok = checks.iter().all(|(ok, _)| *ok);
    let detail: Vec<String> = checks
        .iter()
        .map(|(ok, s)| format!("{} {s}", if *ok { "ok" } else { "MISS" }))
        .collect();
    verdict(ok, detail.join("; "))
}

fn ordering(lab: &mut Lab) -> Outcome {
    let (full, init, km, _, _) = lab.reproduction_scores();
    let (mf, mi, mk) = (mean(&full), mean(&init), mean(&km));
    verdict(
        mf > mi && mi > mk,
        format!("mean NMI full {mf:.4} > pretrain_only {mi:.4} > kmeans {mk:.4}"),
    )
}

fn no_collapse(lab: &mut Lab) -> Outcome {
    let mut bad = Vec::new();
    for seed in 0..SEEDS_COLLAPSE {
        let e = count_empty(&lab.full(seed).out.labels, 4);
        if e > 0 {
            bad.push(format!("full seed {seed}: {e} empty"));
        }
        let e = count_empty(&lab.joint(seed).out.labels, 4);
        if e > 0 {
            bad.push(format!("joint_only_random_init seed {seed}: {e} empty"));
        }
    }
    let ok = bad.is_empty();
    let detail = if ok {
        format!("all 4 clusters non-empty in {SEEDS_COLLAPSE}/{SEEDS_COLLAPSE} seeds for both modes")
    } else {
        bad.join("; ")
    };
    verdict(ok, detail)
}

fn assignment_agreement(lab: &mut Lab) -> Outcome {
    let x = lab.synthetic.x.clone();
    let mut rates = Vec::new();
    for seed in 0..SEEDS_COLLAPSE {
        let out = &lab.full(seed).out;
        let (_, d) = out.model.reconstruct_all(&x).unwrap();
        rates.push(agreement(&out.labels, &assign_by_reconstruction(&d)).unwrap());
    }
    let worst = rates.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(worst >= 0.95, format!("min agreement {worst:.4} >= 0.95 over {}", fmt_list(&rates)))
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let cfg = TrainConfig {
        k: 2,
        embedding_dim: 4,
        gate_hidden: vec![6],
        ae_hidden: vec![6],
        bottleneck_dim: Some(3),
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let mut model = DamicModel::random(5, &cfg, &mut rng).unwrap();
        let x = Matrix::from_fn(8, 5, |_, _| rng.random::<f64>());
        // move the running statistics away from their initial values
        for _ in 0..trial + 1 {
            model.evaluate(&x, Mode::Train).unwrap();
        }
        let eval = model.evaluate(&x, Mode::Eval).unwrap();
        let err = grad_check(&mut model, &eval.grads, |m| m.loss(&x).unwrap(), 1e-5);
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-4 && secs < 30.0,
        format!("max relative error {worst:.2e} < 1e-4 over 5 toy models (n=8, k=2, d=5) in {secs:.2}s"),
    )
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

fn table(truth: &[usize], pred: &[usize]) -> (Vec<Vec<f64>>, f64) {
    let a = truth.iter().max().unwrap() + 1;
    let b = pred.iter().max().unwrap() + 1;
    let mut t = vec![vec![0.0; b]; a];
    for (&u, &v) in truth.iter().zip(pred) {
        t[u][v] += 1.0;
    }
    (t, truth.len() as f64)
}

fn oracle_nmi(truth: &[usize], pred: &[usize]) -> f64 {
    let (t, n) = table(truth, pred);
    let rows: Vec<f64> = t.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..t[0].len()).map(|j| t.iter().map(|r| r[j]).sum()).collect();
    let h = |m: &[f64]| -> f64 { -m.iter().filter(|&&c| c > 0.0).map(|&c| c / n * (c / n).ln()).sum::<f64>() };
    let (hu, hv) = (h(&rows), h(&cols));
    let mut mi = 0.0;
    for (i, r) in t.iter().enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0.0 {
                mi += c / n * (n * c / (rows[i] * cols[j])).ln();
            }
        }
    }
    if hu == 0.0 && hv == 0.0 {
        1.0
    } else if hu == 0.0 || hv == 0.0 {
        0.0
    } else {
        mi / (hu * hv).sqrt()
    }
}

fn oracle_ari(truth: &[usize], pred: &[usize]) -> f64 {
    let (t, n) = table(truth, pred);
    let c2 = |x: f64| x * (x - 1.0) / 2.0;
    let index: f64 = t.iter().flatten().map(|&c| c2(c)).sum();
    let a: f64 = t.iter().map(|r| c2(r.iter().sum())).sum();
    let b: f64 = (0..t[0].len()).map(|j| c2(t.iter().map(|r| r[j]).sum())).sum();
    let expected = a * b / c2(n);
    let max = 0.5 * (a + b);
    if max == expected {
        1.0
    } else {
        (index - expected) / (max - expected)
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn oracle_acc(truth: &[usize], pred: &[usize], k: usize) -> f64 {
    permutations(k)
        .iter()
        .map(|perm| truth.iter().zip(pred).filter(|&(&t, &p)| perm[p] == t).count())
        .max()
        .unwrap() as f64
        / truth.len() as f64
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut acc_mismatch, mut nmi_err, mut ari_err) = (0usize, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let k = rng.random_range(1..=5);
        let n = rng.random_range(5..60);
        let truth = random_labels(&mut rng, n, k);
        let pred = random_labels(&mut rng, n, k);
        if acc(&truth, &pred).unwrap() != oracle_acc(&truth, &pred, k) {
            acc_mismatch += 1;
        }
        nmi_err = nmi_err.max((nmi(&truth, &pred).unwrap() - oracle_nmi(&truth, &pred)).abs());
        ari_err = ari_err.max((ari(&truth, &pred).unwrap() - oracle_ari(&truth, &pred)).abs());
    }
    let truth: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let relabelled: Vec<usize> = truth.iter().map(|&t| (t + 2) % 4).collect();
    let perfect = Scores::compute(&truth, &relabelled).unwrap();
    let perfect_ok = perfect.nmi == 1.0 && perfect.ari == 1.0 && perfect.acc == 1.0;
    verdict(
        acc_mismatch == 0 && nmi_err <= 1e-12 && ari_err <= 1e-12 && perfect_ok,
        format!(
            "ACC mismatches {acc_mismatch}/200; max NMI error {nmi_err:.1e}; max ARI error {ari_err:.1e}; \
             perfect = ({}, {}, {})",
            perfect.nmi, perfect.ari, perfect.acc
        ),
    )
}

fn kmeans_degeneration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut failures = 0;
    for _ in 0..20 {
        let n = rng.random_range(8..40);
        let d = rng.random_range(1..5);
        let k = rng.random_range(2..5);
        let x = Matrix::from_fn(n, d, |_, _| rng.random::<f64>() * 10.0);
        let c0 = Centroids::new(x.select_rows(&(0..k).collect::<Vec<_>>())).unwrap();
        if !kmeans_equivalence_check(&x, &c0, 10).unwrap() {
            failures += 1;
        }
    }
    verdict(failures == 0, format!("{} of 20 random instances bit-identical over 10 steps", 20 - failures))
}

fn numerical_robustness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut problems = Vec::new();
    for trial in 0..50 {
        let (n, k) = (rng.random_range(1..20), rng.random_range(1..8));
        let mut p = Matrix::from_fn(n, k, |_, _| 10f64.powf(-30.0 * rng.random::<f64>()));
        for r in 0..n {
            let s: f64 = p.row(r).iter().sum();
            p.row_mut(r).iter_mut().for_each(|v| *v /= s);
            // one entry pinned to the extreme
            p.row_mut(r)[rng.random_range(0..k)] = 1e-30;
        }
        let d = Matrix::from_fn(n, k, |_, _| if rng.random::<bool>() { 1e6 } else { 1e6 * rng.random::<f64>() });
        let loss = damic_loss(&p, &d).unwrap();
        let w = soft_assign(&p, &d).unwrap().w;
        let stochastic = (0..n).all(|r| {
            let row = w.row(r);
            row.iter().all(|v| v.is_finite() && *v >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() < 1e-12
        });
        if !loss.is_finite() || !stochastic {
            problems.push(trial);
        }
    }
    verdict(
        problems.is_empty(),
        format!("50 instances with D up to 1e6 and P down to 1e-30; failing trials {problems:?}"),
    )
}

fn determinism() -> Outcome {
    let spec = SyntheticSpec {
        n_per_cluster: 100,
        ..SyntheticSpec::default()
    };
    let data = gen_synthetic(&spec).unwrap().dataset;
    let cfg = TrainConfig {
        k: 4,
        seed: 7,
        epochs: 5,
        pretrain_epochs: 5,
        gate_pretrain_epochs: 5,
        embedding_dim: 16,
        gate_hidden: vec![32],
        ae_hidden: vec![32, 16],
        ..TrainConfig::default()
    };
    let labels = data.labels.as_deref();
    let a = fit(&data.x, &cfg, labels).unwrap();
    let b = fit(&data.x, &cfg, labels).unwrap();
    let truth = labels.unwrap();
    let (sa, sb) = (Scores::compute(truth, &a.labels).unwrap(), Scores::compute(truth, &b.labels).unwrap());
    let same_history = a.history.to_csv().as_bytes() == b.history.to_csv().as_bytes();
    verdict(
        same_history && sa == sb && a.labels == b.labels,
        format!(
            "history bytes identical: {same_history}; metrics identical: {}; {} history rows",
            sa == sb,
            a.history.records.len()
        ),
    )
}

fn mnist_desk_scale() -> Outcome {
    let dir = PathBuf::from(std::env::var("DAMIC_MNIST_DIR").unwrap_or_else(|_| "/root/data/mnist10k".into()));
    let data = match load_idx(&dir.join("images-idx3-ubyte"), &dir.join("labels-idx1-ubyte")) {
        Ok(d) => d.random_subset(10_000, 0),
        Err(e) => return Outcome::Fail(format!("cannot load MNIST from {}: {e}", dir.display())),
    };
    let truth = data.labels.clone().expect("idx labels");
    let cfg = mnist_config();
    let start = Instant::now();
    let out = match fit(&data.x, &cfg, None) {
        Ok(o) => o,
        Err(e) => return Outcome::Fail(format!("training failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let full = nmi(&truth, &out.labels).unwrap();
    let init = nmi(&truth, out.pseudo_labels.as_ref().unwrap()).unwrap();
    let km_cfg = KmeansConfig {
        restarts: cfg.kmeans_restarts,
        ..KmeansConfig::default()
    };
    let km = nmi(&truth, &kmeans_fit(&data.x, 10, &km_cfg).unwrap().labels).unwrap();
    verdict(
        full - init >= 0.02 && full - km >= 0.10,
        format!(
            "{} images: full NMI {full:.4}, DAE+KM {init:.4} (gap {:.4} >= 0.02), k-means {km:.4} \
             (gap {:.4} >= 0.10), training {secs:.0}s",
            data.len(),
            full - init,
            full - km
        ),
    )
}

/// Desk-scale MNIST architecture.
fn mnist_config() -> TrainConfig {
    TrainConfig {
        k: 10,
        seed: 0,
        epochs: 20,
        embedding_dim: 256,
        gate_hidden: vec![256],
        ae_hidden: vec![256, 64],
        pretrain_epochs: 30,
        gate_pretrain_epochs: 20,
        ..TrainConfig::default()
    }
}

type Check = fn(&mut Lab) -> Outcome;

fn main() -> ExitCode {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let full_tier = std::env::var("DAMIC_ACCEPTANCE").is_ok_and(|v| v == "full");
    let criteria: [(&str, bool, Check); 10] = [
        ("synthetic_reproduction", true, synthetic_reproduction),
        ("ordering", true, ordering),
        ("no_collapse", true, no_collapse),
        ("assignment_agreement", true, assignment_agreement),
        ("gradient_correctness", false, |_| gradient_correctness()),
        ("metric_oracles", false, |_| metric_oracles()),
        ("kmeans_degeneration", false, |_| kmeans_degeneration()),
        ("numerical_robustness", false, |_| numerical_robustness()),
        ("mnist_desk_scale", true, |_| mnist_desk_scale()),
        ("determinism", false, |_| determinism()),
    ];
    let mut lab = Lab::new();
    let mut failed = 0;
    for (name, heavy, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let outcome = if heavy && !full_tier {
            Outcome::Skip("training-heavy; set DAMIC_ACCEPTANCE=full".into())
        } else {
            check(&mut lab)
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS {name} ({secs:.1}s): {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {d}");
            }
            Outcome::Skip(d) => println!("SKIP {name}: {d}"),
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
