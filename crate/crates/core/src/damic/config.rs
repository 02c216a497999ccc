use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::AdamConfig;

/// Which parts of the training pipeline run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TrainingMode {
    /// Pretraining followed by joint training.
    #[default]
    Full,
    /// Stop after pretraining; the clustering is the DAE+KM result.
    PretrainOnly,
    /// Random initialization, joint training only.
    JointOnlyRandomInit,
    /// No gate: train the bank on the min-reconstruction objective.
    ReconstructionOnly,
}

impl TrainingMode {
    pub const ALL: [TrainingMode; 4] = [
        TrainingMode::Full,
        TrainingMode::PretrainOnly,
        TrainingMode::JointOnlyRandomInit,
        TrainingMode::ReconstructionOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainingMode::Full => "full",
            TrainingMode::PretrainOnly => "pretrain_only",
            TrainingMode::JointOnlyRandomInit => "joint_only_random_init",
            TrainingMode::ReconstructionOnly => "reconstruction_only",
        }
    }
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainingMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown training mode {s:?}")))
    }
}

/// How the single global autoencoder is pretrained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PretrainScheme {
    #[default]
    EndToEnd,
    /// Greedy layer-wise pretraining. Reserved; not implemented.
    LayerWise,
}

impl FromStr for PretrainScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "end_to_end" => Ok(PretrainScheme::EndToEnd),
            "layer_wise" => Ok(PretrainScheme::LayerWise),
            _ => Err(Error::Input(format!("unknown pretrain scheme {s:?}"))),
        }
    }
}

impl fmt::Display for PretrainScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PretrainScheme::EndToEnd => "end_to_end",
            PretrainScheme::LayerWise => "layer_wise",
        })
    }
}

/// Stop when the epoch loss has not improved on the best loss by at least
/// `min_rel_improvement` (relative) for `patience` consecutive epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStop {
    pub patience: usize,
    pub min_rel_improvement: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            patience: 5,
            min_rel_improvement: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    /// Joint-training epochs.
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
    pub mode: TrainingMode,
    /// Width of the gate's last hidden layer `h(x)`.
    pub embedding_dim: usize,
    /// Gate hidden widths before the embedding layer.
    pub gate_hidden: Vec<usize>,
    /// Encoder widths; the decoder mirrors them.
    pub ae_hidden: Vec<usize>,
    /// Autoencoder bottleneck width; `None` means `k`.
    pub bottleneck_dim: Option<usize>,
    /// Encoder widths of the global pretraining autoencoder; `None` reuses
    /// `ae_hidden`.
    pub global_hidden: Option<Vec<usize>>,
    /// Bottleneck of the global autoencoder; `None` reuses the expert one.
    pub global_bottleneck: Option<usize>,
    pub batch_norm: bool,
    /// Keep batch-norm running statistics from pretraining fixed during
    /// joint training instead of re-estimating them. Ignored without
    /// pretraining.
    pub freeze_batch_norm: bool,
    pub adam: AdamConfig,
    /// Epochs for the global autoencoder and for each expert.
    pub pretrain_epochs: usize,
    /// Epochs of cross-entropy gate training on the k-means pseudo-labels.
    pub gate_pretrain_epochs: usize,
    pub pretrain_scheme: PretrainScheme,
    pub kmeans_restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 4,
            epochs: 50,
            batch_size: 256,
            seed: 0,
            early_stop: Some(EarlyStop::default()),
            mode: TrainingMode::Full,
            embedding_dim: 512,
            gate_hidden: vec![512],
            ae_hidden: vec![1024, 256],
            bottleneck_dim: None,
            global_hidden: None,
            global_bottleneck: None,
            batch_norm: true,
            freeze_batch_norm: true,
            adam: AdamConfig::default(),
            pretrain_epochs: 50,
            gate_pretrain_epochs: 20,
            pretrain_scheme: PretrainScheme::EndToEnd,
            kmeans_restarts: 10,
        }
    }
}

impl TrainConfig {
    pub fn bottleneck(&self) -> usize {
        self.bottleneck_dim.unwrap_or(self.k)
    }

    pub fn global_hidden(&self) -> &[usize] {
        self.global_hidden.as_deref().unwrap_or(&self.ae_hidden)
    }

    pub fn global_bottleneck(&self) -> usize {
        self.global_bottleneck.unwrap_or_else(|| self.bottleneck())
    }

    /// Whether the global autoencoder has the experts' shape.
    pub fn global_matches_experts(&self) -> bool {
        self.global_hidden() == self.ae_hidden.as_slice() && self.global_bottleneck() == self.bottleneck()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Input("k must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Input("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Input("epochs must be at least 1".into()));
        }
        if self.embedding_dim == 0 || self.bottleneck() == 0 {
            return Err(Error::Input("layer widths must be positive".into()));
        }
        if self.gate_hidden.contains(&0)
            || self.ae_hidden.contains(&0)
            || self.global_hidden().contains(&0)
            || self.global_bottleneck() == 0
        {
            return Err(Error::Input("layer widths must be positive".into()));
        }
        if self.adam.lr.is_nan() || self.adam.lr <= 0.0 {
            return Err(Error::Input("learning rate must be positive".into()));
        }
        if self.pretrain_scheme == PretrainScheme::LayerWise {
            return Err(Error::Input(
                "layer-wise pretraining is not implemented; use end_to_end".into(),
            ));
        }
        Ok(())
    }
}
