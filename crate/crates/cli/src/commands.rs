use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use damic_core::damic::{
    agreement, assign_by_reconstruction, count_empty, fit, hard_assign, load_model, save_model, FitOutput,
    InitReport, TrainingMode,
};
use damic_core::data::{
    gen_synthetic, load_dataset, load_dense_csv, load_idx, load_labels, load_sparse_triplets, save_assignments,
    save_dataset, save_labels, Dataset,
};
use damic_core::kmeans::{kmeans_fit, KmeansConfig};
use damic_core::metrics::{MetricsReport, Scores};

use crate::config::{DataSource, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Generate,
    Pretrain,
    Train,
    Evaluate,
    Ablation,
}

pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub mode: Option<TrainingMode>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

pub const RESOLVED_CONFIG: &str = "config.resolved";
pub const DATASET_FILE: &str = "dataset.bin";
pub const LABELS_FILE: &str = "labels.csv";
pub const MODEL_FILE: &str = "model.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const INIT_REPORT_FILE: &str = "init_report.txt";
pub const ABLATION_FILE: &str = "ablation.txt";
pub const ABLATION_RUNS_FILE: &str = "ablation_runs.csv";

pub fn run(inv: &Invocation) -> CliResult<()> {
    let text = fs::read_to_string(&inv.config)?;
    let mut cfg = RunConfig::parse(&text)?;
    cfg.apply_overrides(inv.seed, inv.mode, inv.out.clone());
    if inv.command == Command::Pretrain {
        cfg.train.mode = TrainingMode::PretrainOnly;
    }
    cfg.validate()?;
    let model_path = match inv.command {
        Command::Evaluate => Some(
            cfg.model
                .clone()
                .ok_or_else(|| CliError::Config("evaluate needs `model = <path>`".into()))?,
        ),
        _ => None,
    };
    let data = load_data(&cfg)?;
    if inv.command == Command::Evaluate && data.labels.is_none() {
        return Err(CliError::Config("evaluate needs a dataset with labels".into()));
    }
    prepare_out(&cfg.out, inv.force)?;
    fs::write(cfg.out.join(RESOLVED_CONFIG), cfg.resolved())?;
    match inv.command {
        Command::Generate => generate(&cfg, &data),
        Command::Pretrain | Command::Train => train(&cfg, &data),
        Command::Evaluate => evaluate(&cfg, &data, model_path.as_deref().expect("checked above")),
        Command::Ablation => ablation(&cfg, &data),
    }
}

/// Refuses to reuse a non-empty directory unless `force` is set.
pub fn prepare_out(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)?.next().is_some();
        if non_empty && !force {
            return Err(CliError::OutputExists(dir.display().to_string()));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn load_data(cfg: &RunConfig) -> CliResult<Dataset> {
    let mut ds = match &cfg.data {
        DataSource::Synthetic(spec) => gen_synthetic(spec)?.dataset,
        DataSource::Csv {
            path,
            has_labels,
            labels,
        } => with_labels(load_dense_csv(path, *has_labels)?, labels.as_deref())?,
        DataSource::Triplets {
            path,
            rows,
            cols,
            labels,
        } => with_labels(load_sparse_triplets(path, (*rows, *cols))?, labels.as_deref())?,
        DataSource::Idx { images, labels } => load_idx(images, labels)?,
        DataSource::Container { path } => load_dataset(path)?,
    };
    if let Some(n) = cfg.subset {
        if n > ds.len() {
            return Err(CliError::Config(format!("subset {n} exceeds the {} available samples", ds.len())));
        }
        ds = ds.random_subset(n, cfg.subset_seed);
    }
    Ok(ds)
}

fn with_labels(mut ds: Dataset, labels: Option<&Path>) -> CliResult<Dataset> {
    if let Some(path) = labels {
        let l = load_labels(path)?;
        ds = Dataset {
            normalization: ds.normalization.clone(),
            ..Dataset::new(ds.x, Some(l), ds.name)?
        };
    }
    Ok(ds)
}

fn write_metrics(dir: &Path, report: &MetricsReport) -> CliResult<()> {
    fs::write(dir.join(METRICS_FILE), report.to_string())?;
    print!("{report}");
    Ok(())
}

fn generate(cfg: &RunConfig, data: &Dataset) -> CliResult<()> {
    save_dataset(&cfg.out.join(DATASET_FILE), data)?;
    if let Some(l) = &data.labels {
        save_labels(&cfg.out.join(LABELS_FILE), l)?;
    }
    println!("wrote {} samples × {} features to {}", data.len(), data.dim(), cfg.out.display());
    Ok(())
}

fn init_report_text(r: &InitReport) -> String {
    let mut s = String::new();
    writeln!(s, "global_loss = {}", r.global_loss).expect("string write");
    writeln!(s, "kmeans_inertia = {}", r.kmeans_inertia).expect("string write");
    writeln!(s, "gate_accuracy = {}", r.gate_accuracy).expect("string write");
    let sizes: Vec<String> = r.shard_sizes.iter().map(usize::to_string).collect();
    writeln!(s, "shard_sizes = {}", sizes.join(",")).expect("string write");
    let empty: Vec<String> = r.empty_shards.iter().map(usize::to_string).collect();
    writeln!(s, "empty_shards = {}", empty.join(",")).expect("string write");
    s
}

fn train(cfg: &RunConfig, data: &Dataset) -> CliResult<()> {
    let out = fit(&data.x, &cfg.train, data.labels.as_deref())?;
    let dir = &cfg.out;
    save_model(&dir.join(MODEL_FILE), &out.model)?;
    out.history.save_csv(&dir.join(HISTORY_FILE))?;
    let (h, p) = out.model.gate_forward(&data.x)?;
    save_assignments(&dir.join(ASSIGNMENTS_FILE), &out.labels, &p, &h)?;
    if let Some(r) = &out.init_report {
        fs::write(dir.join(INIT_REPORT_FILE), init_report_text(r))?;
    }

    let mut report = MetricsReport::new();
    report.push("final_loss", out.history.final_loss().unwrap_or(f64::NAN));
    report.push("epochs", (out.history.records.len() - 1) as f64);
    report.push("empty_clusters", count_empty(&out.labels, cfg.train.k) as f64);
    if let Some(active) = out.active_experts.last() {
        report.push("active_experts", *active as f64);
    }
    if let Some(truth) = &data.labels {
        report.push_scores("", &Scores::compute(truth, &out.labels)?);
        if let Some(pseudo) = &out.pseudo_labels {
            report.push_scores("init.", &Scores::compute(truth, pseudo)?);
        }
    }
    write_metrics(dir, &report)
}

fn evaluate(cfg: &RunConfig, data: &Dataset, model_path: &Path) -> CliResult<()> {
    let model = load_model(model_path)?;
    let truth = data.labels.as_deref().expect("checked by caller");
    let (_, p) = model.gate_forward(&data.x)?;
    let (_, d) = model.reconstruct_all(&data.x)?;
    let labels = hard_assign(&p);
    let by_reconstruction = assign_by_reconstruction(&d);
    let mut report = MetricsReport::new();
    report.push_scores("", &Scores::compute(truth, &labels)?);
    report.push_scores("reconstruction.", &Scores::compute(truth, &by_reconstruction)?);
    report.push("agreement", agreement(&labels, &by_reconstruction)?);
    report.push("empty_clusters", count_empty(&labels, model.k()) as f64);
    write_metrics(&cfg.out, &report)
}

struct AblationRow {
    seed: u64,
    method: &'static str,
    scores: Scores,
    empty: usize,
}

fn ablation(cfg: &RunConfig, data: &Dataset) -> CliResult<()> {
    let truth = data
        .labels
        .as_deref()
        .ok_or_else(|| CliError::Config("ablation needs a dataset with labels".into()))?;
    let k = cfg.train.k;
    let mut rows = Vec::new();
    for &seed in &cfg.ablation_seeds {
        let mut tc = cfg.train.clone();
        tc.seed = seed;
        tc.mode = TrainingMode::Full;
        let full: FitOutput = fit(&data.x, &tc, None)?;
        let row = |method, labels: &[usize]| -> CliResult<AblationRow> {
            Ok(AblationRow {
                seed,
                method,
                scores: Scores::compute(truth, labels)?,
                empty: count_empty(labels, k),
            })
        };
        rows.push(row("full", &full.labels)?);
        // pretraining consumes the generator identically in both modes, so
        // the full run's pseudo-labels are the pretrain-only result
        let pseudo = full.pseudo_labels.as_deref().expect("full mode pretrains");
        rows.push(row("pretrain_only", pseudo)?);
        tc.mode = TrainingMode::JointOnlyRandomInit;
        let joint = fit(&data.x, &tc, None)?;
        rows.push(row("joint_only_random_init", &joint.labels)?);
        let km = kmeans_fit(
            &data.x,
            k,
            &KmeansConfig {
                seed,
                restarts: cfg.train.kmeans_restarts,
                ..KmeansConfig::default()
            },
        )?;
        rows.push(row("kmeans", &km.labels)?);
    }

    let mut runs = String::from("seed,method,nmi,ari,acc,empty_clusters\n");
    for r in &rows {
        writeln!(
            runs,
            "{},{},{},{},{},{}",
            r.seed, r.method, r.scores.nmi, r.scores.ari, r.scores.acc, r.empty
        )
        .expect("string write");
    }
    fs::write(cfg.out.join(ABLATION_RUNS_FILE), runs)?;

    let n = cfg.ablation_seeds.len() as f64;
    let mut table = format!(
        "{:<24} {:>8} {:>8} {:>8} {:>14}\n",
        "method", "nmi", "ari", "acc", "empty_clusters"
    );
    let mut report = MetricsReport::new();
    for method in ["full", "pretrain_only", "joint_only_random_init", "kmeans"] {
        let mine: Vec<&AblationRow> = rows.iter().filter(|r| r.method == method).collect();
        let mean = |f: fn(&Scores) -> f64| mine.iter().map(|r| f(&r.scores)).sum::<f64>() / n;
        let (nmi, ari, acc) = (mean(|s| s.nmi), mean(|s| s.ari), mean(|s| s.acc));
        let empty: usize = mine.iter().map(|r| r.empty).sum();
        writeln!(table, "{method:<24} {nmi:>8.4} {ari:>8.4} {acc:>8.4} {empty:>14}").expect("string write");
        report.push(format!("{method}.nmi"), nmi);
        report.push(format!("{method}.ari"), ari);
        report.push(format!("{method}.acc"), acc);
        report.push(format!("{method}.empty_clusters"), empty as f64);
    }
    fs::write(cfg.out.join(ABLATION_FILE), &table)?;
    fs::write(cfg.out.join(METRICS_FILE), report.to_string())?;
    print!("{table}");
    Ok(())
}
