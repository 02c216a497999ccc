use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{Autoencoder, AutoencoderBank, DamicModel, GateNetwork};
use super::objective::hard_assign;
use super::train::shuffled_batches;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::kmeans::{kmeans_fit, KmeansConfig};
use crate::nn::{bce_loss, softmax_cross_entropy, softmax_rows, AdamConfig, AdamState, Matrix, Mode};

/// Standard deviation of the noise added to the global autoencoder when it
/// seeds an expert whose shard is empty.
pub const EMPTY_SHARD_NOISE: f64 = 1e-2;

/// Diagnostics of the initialization pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct InitReport {
    /// Final epoch mean BCE of the global autoencoder.
    pub global_loss: f64,
    pub kmeans_inertia: f64,
    /// Fraction of points where the pretrained gate's argmax matches the
    /// pseudo-label.
    pub gate_accuracy: f64,
    pub shard_sizes: Vec<usize>,
    pub empty_shards: Vec<usize>,
}

pub struct Pretrained {
    pub model: DamicModel,
    pub pseudo_labels: Vec<usize>,
    pub report: InitReport,
}

/// Mini-batch BCE training of one autoencoder on `x`; returns the mean
/// per-sample loss of the last epoch.
pub fn train_autoencoder_bce(
    ae: &mut Autoencoder,
    x: &Matrix,
    epochs: usize,
    batch_size: usize,
    adam: AdamConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut state = AdamState::for_blocks(adam, &ae.net.param_blocks_mut());
    let mut last = f64::NAN;
    for _ in 0..epochs {
        let mut total = 0.0;
        for idx in shuffled_batches(x.rows(), batch_size, rng) {
            let batch = x.select_rows(&idx);
            let (y, cache) = ae.net.forward(&batch, Mode::Train)?;
            let (loss, dy) = bce_loss(&y, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("autoencoder pretraining loss {loss}")));
            }
            let (_, grads) = ae.net.backward(&cache, &dy)?;
            state.step(ae.net.param_blocks_mut(), &grads)?;
            total += loss * idx.len() as f64;
        }
        last = total / x.rows() as f64;
    }
    Ok(last)
}

/// Cross-entropy training of the gate as a classifier of `targets`.
pub fn train_gate_ce(
    gate: &mut GateNetwork,
    x: &Matrix,
    targets: &[usize],
    epochs: usize,
    batch_size: usize,
    adam: AdamConfig,
    rng: &mut impl Rng,
) -> Result<()> {
    if targets.len() != x.rows() {
        return Err(Error::shape("gate targets", x.rows(), targets.len()));
    }
    let mut state = AdamState::for_blocks(adam, &gate.param_blocks_mut());
    for _ in 0..epochs {
        for idx in shuffled_batches(x.rows(), batch_size, rng) {
            let batch = x.select_rows(&idx);
            let t: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
            let pass = gate.pass(&batch, Mode::Train)?;
            let (loss, d_logits) = softmax_cross_entropy(&pass.logits, &t)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("gate pretraining loss {loss}")));
            }
            let grads = gate.backward(&pass, &d_logits)?;
            state.step(gate.param_blocks_mut(), &grads)?;
        }
    }
    Ok(())
}

/// Steps (a) and (b): a global autoencoder and k-means on its bottleneck.
pub(crate) fn global_stage(
    x: &Matrix,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Autoencoder, Vec<usize>, f64, f64)> {
    let mut global =
        Autoencoder::new(x.cols(), cfg.global_hidden(), cfg.global_bottleneck(), cfg.batch_norm, rng)?;
    let global_loss =
        train_autoencoder_bce(&mut global, x, cfg.pretrain_epochs, cfg.batch_size, cfg.adam, rng)?;
    let z = global.encode(x)?;
    let km_cfg = KmeansConfig {
        restarts: cfg.kmeans_restarts,
        seed: rng.next_u64(),
        ..KmeansConfig::default()
    };
    let km = kmeans_fit(&z, cfg.k, &km_cfg)?;
    Ok((global, km.labels, km.inertia, global_loss))
}

/// Step (d): every expert is freshly initialized and trained on its own
/// shard. An empty shard gets the global weights plus noise instead, or, when
/// the global autoencoder has a different shape, a fresh expert trained on
/// all of `x`.
pub(crate) fn expert_stage(
    global: &Autoencoder,
    x: &Matrix,
    pseudo: &[usize],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(AutoencoderBank, Vec<usize>, Vec<usize>)> {
    let mut experts = Vec::with_capacity(cfg.k);
    let mut sizes = Vec::with_capacity(cfg.k);
    let mut empty = Vec::new();
    for i in 0..cfg.k {
        let idx: Vec<usize> = (0..pseudo.len()).filter(|&t| pseudo[t] == i).collect();
        let expert = if idx.is_empty() && cfg.global_matches_experts() {
            let mut expert = global.clone();
            expert.perturb(EMPTY_SHARD_NOISE, rng);
            empty.push(i);
            expert
        } else if idx.is_empty() {
            let mut expert =
                Autoencoder::new(x.cols(), &cfg.ae_hidden, cfg.bottleneck(), cfg.batch_norm, rng)?;
            train_autoencoder_bce(&mut expert, x, cfg.pretrain_epochs, cfg.batch_size, cfg.adam, rng)?;
            empty.push(i);
            expert
        } else {
            let mut expert =
                Autoencoder::new(x.cols(), &cfg.ae_hidden, cfg.bottleneck(), cfg.batch_norm, rng)?;
            let shard = x.select_rows(&idx);
            train_autoencoder_bce(&mut expert, &shard, cfg.pretrain_epochs, cfg.batch_size, cfg.adam, rng)?;
            expert
        };
        sizes.push(idx.len());
        experts.push(expert);
    }
    Ok((AutoencoderBank::new(experts)?, sizes, empty))
}

/// The full initialization pipeline, seeded by `cfg.seed`.
pub fn pretrain(x: &Matrix, cfg: &TrainConfig) -> Result<Pretrained> {
    cfg.validate()?;
    pretrain_with(x, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

pub(crate) fn pretrain_with(x: &Matrix, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Pretrained> {
    if x.rows() < cfg.k {
        return Err(Error::Input(format!("need at least k={} points, got {}", cfg.k, x.rows())));
    }
    let (global, pseudo, kmeans_inertia, global_loss) = global_stage(x, cfg, rng)?;

    let mut gate = GateNetwork::new(x.cols(), &cfg.gate_hidden, cfg.embedding_dim, cfg.k, cfg.batch_norm, rng)?;
    train_gate_ce(&mut gate, x, &pseudo, cfg.gate_pretrain_epochs, cfg.batch_size, cfg.adam, rng)?;
    let (_, logits) = gate.embed_and_logits(x)?;
    let predicted = hard_assign(&softmax_rows(&logits));
    let hits = predicted.iter().zip(&pseudo).filter(|(a, b)| a == b).count();

    let (bank, shard_sizes, empty_shards) = expert_stage(&global, x, &pseudo, cfg, rng)?;
    let model = DamicModel::new(gate, bank)?;
    Ok(Pretrained {
        model,
        report: InitReport {
            global_loss,
            kmeans_inertia,
            gate_accuracy: hits as f64 / x.rows() as f64,
            shard_sizes,
            empty_shards,
        },
        pseudo_labels: pseudo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs() -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for t in 0..60 {
            let c = t % 2;
            let base = if c == 0 { 0.15 } else { 0.85 };
            rows.push((0..6).map(|_| base + rng.random_range(-0.05..0.05)).collect::<Vec<f64>>());
            labels.push(c);
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            k: 2,
            embedding_dim: 4,
            gate_hidden: vec![8],
            ae_hidden: vec![8],
            batch_size: 16,
            pretrain_epochs: 30,
            gate_pretrain_epochs: 30,
            kmeans_restarts: 2,
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_blobs_initialize_cleanly() {
        let (x, truth) = two_blobs();
        let init = pretrain(&x, &small_cfg()).unwrap();
        let scores = crate::metrics::Scores::compute(&truth, &init.pseudo_labels).unwrap();
        assert_eq!(scores.acc, 1.0);
        assert!(init.report.gate_accuracy >= 0.95, "{:?}", init.report);
        assert_eq!(init.report.shard_sizes, vec![30, 30]);
        assert!(init.report.empty_shards.is_empty());
    }

    #[test]
    fn empty_shard_gets_perturbed_global_weights() {
        let (x, _) = two_blobs();
        let cfg = TrainConfig {
            k: 3,
            ..small_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let global = Autoencoder::new(6, &[8], 3, true, &mut rng).unwrap();
        let pseudo: Vec<usize> = (0..60).map(|t| t % 2).collect();
        let (bank, sizes, empty) = expert_stage(&global, &x, &pseudo, &cfg, &mut rng).unwrap();
        assert_eq!(sizes, vec![30, 30, 0]);
        assert_eq!(empty, vec![2]);
        let diff: f64 = bank.experts[2]
            .net
            .param_blocks()
            .iter()
            .zip(global.net.param_blocks())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max);
        assert!(diff > 0.0 && diff < 0.1, "{diff}");
    }

    #[test]
    fn too_few_points_is_an_input_error() {
        let x = Matrix::zeros(1, 6);
        assert!(matches!(pretrain(&x, &small_cfg()), Err(Error::Input(_))));
    }
}
