//! Autoencoder-mixture clustering: a softmax gate routes each point to one
//! of `k` expert autoencoders, and joint training minimizes the mixture
//! reconstruction loss.

mod config;
mod model;
mod objective;
mod persist;
mod pretrain;
mod train;
mod variants;

pub use config::{EarlyStop, PretrainScheme, TrainConfig, TrainingMode};
pub use model::{Autoencoder, AutoencoderBank, BatchEvaluation, DamicModel, GateNetwork};
pub use objective::{
    agreement, assign_by_reconstruction, count_empty, damic_loss, hard_assign, soft_assign,
    SoftAssignment, LOG_PROB_FLOOR,
};
pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use pretrain::{
    pretrain, train_autoencoder_bce, train_gate_ce, InitReport, Pretrained, EMPTY_SHARD_NOISE,
};
pub use train::{
    adam_for, fit, joint_train, shuffled_batches, train_step, train_step_in, EpochRecord, FitOutput, History,
};
pub use variants::{
    fit_reconstruction_only, kmeans_equivalence_check, reconstruction_only_step,
    ReconstructionOnlyRun,
};
