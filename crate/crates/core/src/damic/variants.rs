//! The reconstruction-only objective and the constant-expert reduction to
//! Lloyd's algorithm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::AutoencoderBank;
use super::objective::{assign_by_reconstruction, count_empty};
use super::pretrain::{expert_stage, global_stage};
use super::train::shuffled_batches;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::kmeans::{lloyd_step, Centroids};
use crate::nn::{half_sq_distance, AdamState, Matrix, Mode};

/// Output of [`fit_reconstruction_only`].
#[derive(Clone, Debug)]
pub struct ReconstructionOnlyRun {
    pub bank: AutoencoderBank,
    pub labels: Vec<usize>,
    /// Experts owning at least one point after each epoch.
    pub active_experts: Vec<usize>,
    /// Mean of `min_i D[t][i]` after each epoch.
    pub losses: Vec<f64>,
    pub stopped_early: bool,
}

pub(crate) struct BankRun {
    pub active_experts: Vec<usize>,
    pub losses: Vec<f64>,
    pub stopped_early: bool,
}

/// One update of `Σ_t min_i D[t][i]`: each sample's adjoint reaches only
/// its argmin expert. Returns the mean batch loss and the routing.
pub fn reconstruction_only_step(
    bank: &mut AutoencoderBank,
    batch: &Matrix,
    adam: &mut AdamState,
) -> Result<(f64, Vec<usize>)> {
    let (n, k) = (batch.rows(), bank.k());
    let mut d = Matrix::zeros(n, k);
    let mut passes = Vec::with_capacity(k);
    for (i, e) in bank.experts.iter_mut().enumerate() {
        let (xhat, cache) = e.net.forward(batch, Mode::Train)?;
        for (t, v) in half_sq_distance(batch, &xhat)?.into_iter().enumerate() {
            d[(t, i)] = v;
        }
        passes.push((xhat, cache));
    }
    let route = assign_by_reconstruction(&d);
    let loss: f64 = route.iter().enumerate().map(|(t, &i)| d[(t, i)]).sum();
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("reconstruction-only loss {loss}")));
    }
    let scale = 1.0 / n.max(1) as f64;
    let mut grads = crate::nn::Gradients { blocks: Vec::new() };
    for (i, (e, (xhat, cache))) in bank.experts.iter().zip(&passes).enumerate() {
        let mut adj = Matrix::zeros(n, batch.cols());
        for t in (0..n).filter(|&t| route[t] == i) {
            for ((a, p), q) in adj.row_mut(t).iter_mut().zip(xhat.row(t)).zip(batch.row(t)) {
                *a = scale * (p - q);
            }
        }
        grads.extend(e.net.backward(cache, &adj)?.1);
    }
    adam.step(bank.param_blocks_mut(), &grads)?;
    Ok((loss * scale, route))
}

pub(crate) fn train_bank_reconstruction_only(
    bank: &mut AutoencoderBank,
    x: &Matrix,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<BankRun> {
    let mut adam = AdamState::for_blocks(cfg.adam, &bank.param_blocks_mut());
    let mut run = BankRun {
        active_experts: Vec::new(),
        losses: Vec::new(),
        stopped_early: false,
    };
    let (mut best, mut stale) = (f64::INFINITY, 0);
    for _ in 0..cfg.epochs {
        for idx in shuffled_batches(x.rows(), cfg.batch_size, rng) {
            reconstruction_only_step(bank, &x.select_rows(&idx), &mut adam)?;
        }
        let (_, d) = bank.reconstruct_all(x)?;
        let labels = assign_by_reconstruction(&d);
        let loss = labels.iter().enumerate().map(|(t, &i)| d[(t, i)]).sum::<f64>() / x.rows() as f64;
        run.active_experts.push(bank.k() - count_empty(&labels, bank.k()));
        run.losses.push(loss);
        if let Some(rule) = cfg.early_stop {
            if loss < best - rule.min_rel_improvement * best.abs() || !best.is_finite() {
                best = loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= rule.patience {
                    run.stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok(run)
}

/// Initializes a bank with pretraining steps (a), (b) and (d), then trains it
/// on the hard-min reconstruction objective. Starvation is reported through
/// `active_experts`, not repaired.
pub fn fit_reconstruction_only(x: &Matrix, cfg: &TrainConfig) -> Result<ReconstructionOnlyRun> {
    cfg.validate()?;
    if x.rows() < cfg.k {
        return Err(Error::Input(format!("need at least k={} points, got {}", cfg.k, x.rows())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (global, pseudo, _, _) = global_stage(x, cfg, &mut rng)?;
    let (mut bank, _, _) = expert_stage(&global, x, &pseudo, cfg, &mut rng)?;
    let run = train_bank_reconstruction_only(&mut bank, x, cfg, &mut rng)?;
    let labels = assign_by_reconstruction(&bank.reconstruct_all(x)?.1);
    Ok(ReconstructionOnlyRun {
        bank,
        labels,
        active_experts: run.active_experts,
        losses: run.losses,
        stopped_early: run.stopped_early,
    })
}

/// Refits constant experts `f_i(x) ≡ μ_i`: the minimizer of
/// `Σ ½‖x − μ‖²` over a cluster is its mean; an expert with no points is
/// left unchanged.
fn refit_constant_experts(x: &Matrix, labels: &[usize], experts: &Matrix) -> Matrix {
    let mut out = experts.clone();
    for i in 0..experts.rows() {
        let members: Vec<usize> = (0..labels.len()).filter(|&t| labels[t] == i).collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; x.cols()];
        for &t in &members {
            mean.iter_mut().zip(x.row(t)).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= members.len() as f64);
        out.row_mut(i).copy_from_slice(&mean);
    }
    out
}

/// Runs `steps` rounds of hard reconstruction routing with constant experts
/// next to [`lloyd_step`] from the same start and reports whether labels and
/// centroids agree bit for bit at every round.
pub fn kmeans_equivalence_check(x: &Matrix, c0: &Centroids, steps: usize) -> Result<bool> {
    if x.cols() != c0.dim() {
        return Err(Error::shape("kmeans_equivalence_check", c0.dim(), x.cols()));
    }
    let (n, k) = (x.rows(), c0.k());
    let mut experts = c0.means.clone();
    let mut lloyd = c0.clone();
    for _ in 0..steps {
        let mut d = Matrix::zeros(n, k);
        for i in 0..k {
            let constant = Matrix::from_fn(n, x.cols(), |_, c| experts[(i, c)]);
            for (t, v) in half_sq_distance(x, &constant)?.into_iter().enumerate() {
                d[(t, i)] = v;
            }
        }
        let labels = assign_by_reconstruction(&d);
        experts = refit_constant_experts(x, &labels, &experts);

        let step = lloyd_step(x, &lloyd)?;
        let same_centroids = step
            .centroids
            .means
            .as_slice()
            .iter()
            .zip(experts.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if step.labels != labels || !same_centroids {
            return Ok(false);
        }
        lloyd = step.centroids;
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmeans::{kmeans_from, kmeanspp_init};
    use crate::nn::AdamConfig;

    fn random_points(n: usize, dim: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, dim, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn constant_experts_reproduce_lloyd() {
        let x = random_points(12, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c0 = kmeanspp_init(&x, 3, &mut rng).unwrap();
        assert!(kmeans_equivalence_check(&x, &c0, 10).unwrap());
    }

    #[test]
    fn single_point_single_cluster() {
        let x = Matrix::from_rows(&[vec![0.3, -0.7]]).unwrap();
        let c0 = Centroids::new(Matrix::from_rows(&[vec![5.0, 5.0]]).unwrap()).unwrap();
        assert!(kmeans_equivalence_check(&x, &c0, 1).unwrap());
        let step = lloyd_step(&x, &c0).unwrap();
        assert_eq!(step.centroids.means.row(0), x.row(0));
    }

    #[test]
    fn converged_state_is_fixed_point() {
        let x = random_points(30, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c0 = kmeanspp_init(&x, 3, &mut rng).unwrap();
        let done = kmeans_from(&x, c0, 300, 0.0).unwrap();
        assert!(kmeans_equivalence_check(&x, &done.centroids, 3).unwrap());
        let again = lloyd_step(&x, &done.centroids).unwrap();
        assert_eq!(again.centroids, done.centroids);
    }

    #[test]
    fn hard_min_gradient_reaches_one_expert_per_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let experts = (0..3)
            .map(|_| super::super::Autoencoder::new(4, &[5], 2, false, &mut rng).unwrap())
            .collect();
        let mut bank = AutoencoderBank::new(experts).unwrap();
        let before = bank.clone();
        // a single point routes to exactly one expert; only that one moves
        let x = random_points(1, 4, 8).map(|v| 0.5 + 0.4 * v);
        let mut adam = AdamState::for_blocks(AdamConfig::default(), &bank.param_blocks_mut());
        let (_, route) = reconstruction_only_step(&mut bank, &x, &mut adam).unwrap();
        for i in 0..3 {
            let moved = bank.experts[i] != before.experts[i];
            assert_eq!(moved, i == route[0], "expert {i}");
        }
    }
}
