//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear
//! at most once and unknown keys are rejected, so a config file is a complete
//! record of a run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use damic_core::damic::{EarlyStop, PretrainScheme, TrainConfig, TrainingMode};
use damic_core::data::SyntheticSpec;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// Dense comma-separated rows; with `has_labels` the last column is the label.
    Csv {
        path: PathBuf,
        has_labels: bool,
        labels: Option<PathBuf>,
    },
    /// `row,col,value` triplets of a `rows × cols` matrix.
    Triplets {
        path: PathBuf,
        rows: usize,
        cols: usize,
        labels: Option<PathBuf>,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    /// A dataset written by `generate`.
    Container { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    /// Seeded random subset of this many samples.
    pub subset: Option<usize>,
    pub subset_seed: u64,
    pub train: TrainConfig,
    pub out: PathBuf,
    /// Model file for `evaluate`.
    pub model: Option<PathBuf>,
    pub ablation_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticSpec::default()),
            subset: None,
            subset_seed: 0,
            train: TrainConfig::default(),
            out: PathBuf::from("run"),
            model: None,
            ablation_seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> CliResult<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::ConfigLine {
                line: i + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(CliError::ConfigLine {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            if map.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(CliError::ConfigLine {
                    line: i + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { map })
    }

    fn take_raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take_raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| CliError::ConfigLine {
                line,
                message: format!("`{key}`: {e}"),
            }),
        }
    }

    fn take_with<T>(&mut self, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> CliResult<Option<T>> {
        match self.take_raw(key) {
            None => Ok(None),
            Some((line, v)) => f(&v).map(Some).map_err(|message| CliError::ConfigLine {
                line,
                message: format!("`{key}`: {message}"),
            }),
        }
    }

    fn require_path(&mut self, key: &str, source: &str) -> CliResult<PathBuf> {
        self.take::<PathBuf>(key)?
            .ok_or_else(|| CliError::Config(format!("data = {source} needs `{key}`")))
    }

    fn finish(self) -> CliResult<()> {
        match self.map.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(CliError::ConfigLine {
                line,
                message: format!("unknown key `{key}`"),
            }),
        }
    }
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn parse_means(v: &str) -> Result<Vec<[f64; 2]>, String> {
    v.split(';')
        .map(|pair| {
            let xy: Vec<f64> = parse_list(pair)?;
            match xy.as_slice() {
                [x, y] => Ok([*x, *y]),
                _ => Err(format!("expected `x,y`, got {pair:?}")),
            }
        })
        .collect()
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("expected true or false, got {other:?}")),
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut e = Entries::parse(text)?;
        let defaults = RunConfig::default();

        let source = e.take::<String>("data")?.unwrap_or_else(|| "synthetic".into());
        let data = match source.as_str() {
            "synthetic" => {
                let d = SyntheticSpec::default();
                DataSource::Synthetic(SyntheticSpec {
                    n_per_cluster: e.take("synthetic_n_per_cluster")?.unwrap_or(d.n_per_cluster),
                    means: e.take_with("synthetic_means", parse_means)?.unwrap_or(d.means),
                    sigma: e.take("synthetic_sigma")?.unwrap_or(d.sigma),
                    obs_dim: e.take("synthetic_obs_dim")?.unwrap_or(d.obs_dim),
                    w_seed: e.take("synthetic_w_seed")?.unwrap_or(d.w_seed),
                    noise_seed: e.take("synthetic_noise_seed")?.unwrap_or(d.noise_seed),
                })
            }
            "csv" => DataSource::Csv {
                path: e.require_path("data_path", "csv")?,
                has_labels: e.take_with("data_has_labels", parse_bool)?.unwrap_or(false),
                labels: e.take("labels_path")?,
            },
            "triplets" => DataSource::Triplets {
                path: e.require_path("data_path", "triplets")?,
                rows: e
                    .take("triplet_rows")?
                    .ok_or_else(|| CliError::Config("data = triplets needs `triplet_rows`".into()))?,
                cols: e
                    .take("triplet_cols")?
                    .ok_or_else(|| CliError::Config("data = triplets needs `triplet_cols`".into()))?,
                labels: e.take("labels_path")?,
            },
            "idx" => DataSource::Idx {
                images: e.require_path("idx_images", "idx")?,
                labels: e.require_path("idx_labels", "idx")?,
            },
            "container" => DataSource::Container {
                path: e.require_path("data_path", "container")?,
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown data source {other:?} (synthetic, csv, triplets, idx, container)"
                )))
            }
        };

        let t = TrainConfig::default();
        let k = e.take("k")?.unwrap_or(t.k);
        let early_on = e.take_with("early_stop", parse_bool)?.unwrap_or(true);
        let es = EarlyStop::default();
        let early_stop = EarlyStop {
            patience: e.take("patience")?.unwrap_or(es.patience),
            min_rel_improvement: e.take("min_rel_improvement")?.unwrap_or(es.min_rel_improvement),
        };
        let mut adam = t.adam;
        adam.lr = e.take("lr")?.unwrap_or(adam.lr);
        adam.beta1 = e.take("adam_beta1")?.unwrap_or(adam.beta1);
        adam.beta2 = e.take("adam_beta2")?.unwrap_or(adam.beta2);
        adam.epsilon = e.take("adam_epsilon")?.unwrap_or(adam.epsilon);
        let train = TrainConfig {
            k,
            epochs: e.take("epochs")?.unwrap_or(t.epochs),
            batch_size: e.take("batch_size")?.unwrap_or(t.batch_size),
            seed: e.take("seed")?.unwrap_or(t.seed),
            early_stop: early_on.then_some(early_stop),
            mode: e.take("mode")?.unwrap_or(t.mode),
            embedding_dim: e.take("embedding_dim")?.unwrap_or(t.embedding_dim),
            gate_hidden: e.take_with("gate_hidden", parse_list)?.unwrap_or(t.gate_hidden),
            ae_hidden: e.take_with("ae_hidden", parse_list)?.unwrap_or(t.ae_hidden),
            bottleneck_dim: e
                .take_with("bottleneck", |v| {
                    if v == "k" {
                        Ok(None)
                    } else {
                        v.parse().map(Some).map_err(|e| format!("{e}"))
                    }
                })?
                .unwrap_or(t.bottleneck_dim),
            global_hidden: e
                .take_with("global_hidden", |v| {
                    if v == "same" {
                        Ok(None)
                    } else {
                        parse_list(v).map(Some)
                    }
                })?
                .unwrap_or(t.global_hidden),
            global_bottleneck: e
                .take_with("global_bottleneck", |v| {
                    if v == "same" {
                        Ok(None)
                    } else {
                        v.parse().map(Some).map_err(|e| format!("{e}"))
                    }
                })?
                .unwrap_or(t.global_bottleneck),
            batch_norm: e.take_with("batch_norm", parse_bool)?.unwrap_or(t.batch_norm),
            freeze_batch_norm: e
                .take_with("freeze_batch_norm", parse_bool)?
                .unwrap_or(t.freeze_batch_norm),
            adam,
            pretrain_epochs: e.take("pretrain_epochs")?.unwrap_or(t.pretrain_epochs),
            gate_pretrain_epochs: e.take("gate_pretrain_epochs")?.unwrap_or(t.gate_pretrain_epochs),
            pretrain_scheme: e.take::<PretrainScheme>("pretrain_scheme")?.unwrap_or(t.pretrain_scheme),
            kmeans_restarts: e.take("kmeans_restarts")?.unwrap_or(t.kmeans_restarts),
        };

        let cfg = RunConfig {
            data,
            subset: e.take("subset")?,
            subset_seed: e.take("subset_seed")?.unwrap_or(defaults.subset_seed),
            train,
            out: e.take("out")?.unwrap_or(defaults.out),
            model: e.take("model")?,
            ablation_seeds: e
                .take_with("ablation_seeds", parse_list)?
                .unwrap_or(defaults.ablation_seeds),
        };
        e.finish()?;
        Ok(cfg)
    }

    /// Applies command-line overrides.
    pub fn apply_overrides(&mut self, seed: Option<u64>, mode: Option<TrainingMode>, out: Option<PathBuf>) {
        if let Some(s) = seed {
            self.train.seed = s;
        }
        if let Some(m) = mode {
            self.train.mode = m;
        }
        if let Some(o) = out {
            self.out = o;
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train.validate()?;
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        if self.subset == Some(0) {
            return Err(CliError::Config("subset must be positive".into()));
        }
        if self.ablation_seeds.is_empty() {
            return Err(CliError::Config("ablation_seeds must not be empty".into()));
        }
        Ok(())
    }

    /// Every effective setting, in a form [`RunConfig::parse`] reads back.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        match &self.data {
            DataSource::Synthetic(spec) => {
                kv("data", "synthetic".into());
                kv("synthetic_n_per_cluster", spec.n_per_cluster.to_string());
                let means: Vec<String> = spec.means.iter().map(|m| format!("{},{}", m[0], m[1])).collect();
                kv("synthetic_means", means.join(";"));
                kv("synthetic_sigma", spec.sigma.to_string());
                kv("synthetic_obs_dim", spec.obs_dim.to_string());
                kv("synthetic_w_seed", spec.w_seed.to_string());
                kv("synthetic_noise_seed", spec.noise_seed.to_string());
            }
            DataSource::Csv {
                path,
                has_labels,
                labels,
            } => {
                kv("data", "csv".into());
                kv("data_path", path.display().to_string());
                kv("data_has_labels", has_labels.to_string());
                if let Some(l) = labels {
                    kv("labels_path", l.display().to_string());
                }
            }
            DataSource::Triplets {
                path,
                rows,
                cols,
                labels,
            } => {
                kv("data", "triplets".into());
                kv("data_path", path.display().to_string());
                kv("triplet_rows", rows.to_string());
                kv("triplet_cols", cols.to_string());
                if let Some(l) = labels {
                    kv("labels_path", l.display().to_string());
                }
            }
            DataSource::Idx { images, labels } => {
                kv("data", "idx".into());
                kv("idx_images", images.display().to_string());
                kv("idx_labels", labels.display().to_string());
            }
            DataSource::Container { path } => {
                kv("data", "container".into());
                kv("data_path", path.display().to_string());
            }
        }
        if let Some(n) = self.subset {
            kv("subset", n.to_string());
        }
        kv("subset_seed", self.subset_seed.to_string());
        let t = &self.train;
        kv("k", t.k.to_string());
        kv("mode", t.mode.to_string());
        kv("seed", t.seed.to_string());
        kv("epochs", t.epochs.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("early_stop", t.early_stop.is_some().to_string());
        let es = t.early_stop.unwrap_or_default();
        kv("patience", es.patience.to_string());
        kv("min_rel_improvement", es.min_rel_improvement.to_string());
        kv("embedding_dim", t.embedding_dim.to_string());
        kv("gate_hidden", join(&t.gate_hidden));
        kv("ae_hidden", join(&t.ae_hidden));
        kv("bottleneck", t.bottleneck_dim.map_or("k".into(), |b| b.to_string()));
        kv("global_hidden", t.global_hidden.as_ref().map_or("same".into(), |h| join(h)));
        kv("global_bottleneck", t.global_bottleneck.map_or("same".into(), |b| b.to_string()));
        kv("batch_norm", t.batch_norm.to_string());
        kv("freeze_batch_norm", t.freeze_batch_norm.to_string());
        kv("lr", t.adam.lr.to_string());
        kv("adam_beta1", t.adam.beta1.to_string());
        kv("adam_beta2", t.adam.beta2.to_string());
        kv("adam_epsilon", t.adam.epsilon.to_string());
        kv("pretrain_epochs", t.pretrain_epochs.to_string());
        kv("gate_pretrain_epochs", t.gate_pretrain_epochs.to_string());
        kv("pretrain_scheme", t.pretrain_scheme.to_string());
        kv("kmeans_restarts", t.kmeans_restarts.to_string());
        kv("out", self.out.display().to_string());
        if let Some(m) = &self.model {
            kv("model", m.display().to_string());
        }
        kv("ablation_seeds", join(&self.ablation_seeds));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("# only a comment\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn resolved_round_trips() {
        let text = "k = 3\nmode = joint_only_random_init\nae_hidden = 32,16\nbottleneck = 5\n\
                    early_stop = false\nsynthetic_means = 0,0;1.5,-2\nlr = 0.01\nglobal_hidden = 8\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.train.k, 3);
        assert_eq!(cfg.train.early_stop, None);
        assert_eq!(cfg.train.ae_hidden, vec![32, 16]);
        assert_eq!(cfg.train.global_hidden, Some(vec![8]));
        assert_eq!(RunConfig::parse(&cfg.resolved()).unwrap(), cfg);
        let d = RunConfig::default();
        assert_eq!(RunConfig::parse(&d.resolved()).unwrap(), d);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let err = RunConfig::parse("k = 2\nlearning_rate = 0.1\n").unwrap_err();
        assert!(matches!(err, CliError::ConfigLine { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("learning_rate"));
        assert!(RunConfig::parse("k = 2\nk = 3\n").is_err());
        assert!(RunConfig::parse("k 2\n").is_err());
        assert!(RunConfig::parse("k = two\n").is_err());
        assert!(RunConfig::parse("mode = sideways\n").is_err());
        assert!(RunConfig::parse("data = csv\n").is_err());
        assert!(RunConfig::parse("data = parquet\n").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::parse("seed = 1\nmode = full\n").unwrap();
        cfg.apply_overrides(Some(7), Some(TrainingMode::PretrainOnly), Some("elsewhere".into()));
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.mode, TrainingMode::PretrainOnly);
        assert_eq!(cfg.out, PathBuf::from("elsewhere"));
    }
}
