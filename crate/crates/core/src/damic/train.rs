use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::DamicModel;
use super::objective::{assign_by_reconstruction, hard_assign};
use super::pretrain::{pretrain_with, InitReport};
use super::variants::train_bank_reconstruction_only;
use super::{EarlyStop, TrainConfig, TrainingMode};
use crate::error::{Error, Result};
use crate::metrics::Scores;
use crate::nn::{AdamState, Matrix, Mode};

/// Shuffled mini-batches of row indices. A trailing batch of a single row is
/// folded into the previous one so batch statistics stay defined.
pub fn shuffled_batches(n: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let tail = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(tail);
    }
    batches
}

/// One Adam update of every gate and expert parameter on the batch-mean
/// gradient. Returns the mean per-sample loss of the batch.
pub fn train_step(model: &mut DamicModel, batch: &Matrix, adam: &mut AdamState) -> Result<f64> {
    train_step_in(model, batch, adam, Mode::Train)
}

/// [`train_step`] with an explicit batch-norm mode; `Eval` keeps running
/// statistics fixed while still updating every other parameter.
pub fn train_step_in(
    model: &mut DamicModel,
    batch: &Matrix,
    adam: &mut AdamState,
    mode: Mode,
) -> Result<f64> {
    let mut eval = model.evaluate(batch, mode)?;
    let n = batch.rows().max(1) as f64;
    eval.grads.scale(1.0 / n);
    adam.step(model.param_blocks_mut(), &eval.grads)?;
    Ok(eval.loss / n)
}

pub fn adam_for(model: &mut DamicModel, cfg: &TrainConfig) -> AdamState {
    AdamState::for_blocks(cfg.adam, &model.param_blocks_mut())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 0 is the state before any joint update.
    pub epoch: usize,
    /// Mean per-sample loss over the full dataset, eval mode.
    pub loss: f64,
    pub scores: Option<Scores>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl History {
    pub fn initial_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    /// `epoch,loss` rows, with `nmi,ari,acc` appended when scores are present.
    pub fn to_csv(&self) -> String {
        let with_scores = self.records.iter().any(|r| r.scores.is_some());
        let mut out = String::from(if with_scores {
            "epoch,loss,nmi,ari,acc\n"
        } else {
            "epoch,loss\n"
        });
        for r in &self.records {
            write!(out, "{},{}", r.epoch, r.loss).expect("string write");
            if with_scores {
                match &r.scores {
                    Some(s) => write!(out, ",{},{},{}", s.nmi, s.ari, s.acc),
                    None => write!(out, ",,,"),
                }
                .expect("string write");
            }
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

struct Stopper {
    rule: EarlyStop,
    best: f64,
    stale: usize,
}

impl Stopper {
    fn new(rule: EarlyStop, initial: f64) -> Self {
        Self {
            rule,
            best: initial,
            stale: 0,
        }
    }

    /// Returns `true` when training should stop.
    fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best - self.rule.min_rel_improvement * self.best.abs() {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.rule.patience
    }
}

fn record(
    model: &DamicModel,
    x: &Matrix,
    epoch: usize,
    labels: Option<&[usize]>,
    by_reconstruction: bool,
) -> Result<EpochRecord> {
    let n = x.rows().max(1) as f64;
    let loss = model.loss(x)? / n;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("epoch {epoch}: loss is {loss}")));
    }
    let scores = match labels {
        Some(truth) => {
            let pred = predict(model, x, by_reconstruction)?;
            Some(Scores::compute(truth, &pred)?)
        }
        None => None,
    };
    Ok(EpochRecord {
        epoch,
        loss,
        scores,
    })
}

fn predict(model: &DamicModel, x: &Matrix, by_reconstruction: bool) -> Result<Vec<usize>> {
    if by_reconstruction {
        Ok(assign_by_reconstruction(&model.reconstruct_all(x)?.1))
    } else {
        Ok(hard_assign(&model.gate_forward(x)?.1))
    }
}

/// Shuffled mini-batch joint training with optional early stopping.
pub fn joint_train(
    model: &mut DamicModel,
    x: &Matrix,
    cfg: &TrainConfig,
    labels: Option<&[usize]>,
    rng: &mut impl Rng,
) -> Result<History> {
    let mut adam = adam_for(model, cfg);
    let mut history = History::default();
    let first = record(model, x, 0, labels, false)?;
    let mut stopper = cfg.early_stop.map(|r| Stopper::new(r, first.loss));
    history.records.push(first);
    let mode = if cfg.freeze_batch_norm { Mode::Eval } else { Mode::Train };
    for epoch in 1..=cfg.epochs {
        for idx in shuffled_batches(x.rows(), cfg.batch_size, rng) {
            train_step_in(model, &x.select_rows(&idx), &mut adam, mode)
                .map_err(|e| at_epoch(e, epoch))?;
        }
        let rec = record(model, x, epoch, labels, false)?;
        let stop = stopper.as_mut().is_some_and(|s| s.observe(rec.loss));
        history.records.push(rec);
        if stop {
            history.stopped_early = true;
            break;
        }
    }
    Ok(history)
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Divergence(m) => Error::Divergence(format!("epoch {epoch}: {m}")),
        other => other,
    }
}

/// Result of [`fit`].
#[derive(Clone, Debug)]
pub struct FitOutput {
    pub model: DamicModel,
    pub history: History,
    /// DAE+KM labels from pretraining; absent for random initialization.
    pub pseudo_labels: Option<Vec<usize>>,
    pub init_report: Option<InitReport>,
    /// Experts that own at least one point after each epoch
    /// (reconstruction-only mode only).
    pub active_experts: Vec<usize>,
    /// Final cluster labels under the assignment rule of the mode.
    pub labels: Vec<usize>,
}

/// Runs the configured training mode end to end.
///
/// `labels`, when given, are only used to log per-epoch scores.
pub fn fit(x: &Matrix, cfg: &TrainConfig, labels: Option<&[usize]>) -> Result<FitOutput> {
    cfg.validate()?;
    if x.rows() < cfg.k {
        return Err(Error::Input(format!(
            "need at least k={} points, got {}",
            cfg.k,
            x.rows()
        )));
    }
    if let Some(l) = labels {
        if l.len() != x.rows() {
            return Err(Error::shape("labels", x.rows(), l.len()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut active_experts = Vec::new();
    let (model, history, pseudo, report, by_reconstruction) = match cfg.mode {
        TrainingMode::JointOnlyRandomInit => {
            let mut model = DamicModel::random(x.cols(), cfg, &mut rng)?;
            // nothing to freeze: the running statistics are still at their defaults
            let live = TrainConfig {
                freeze_batch_norm: false,
                ..cfg.clone()
            };
            let history = joint_train(&mut model, x, &live, labels, &mut rng)?;
            (model, history, None, None, false)
        }
        TrainingMode::Full => {
            let init = pretrain_with(x, cfg, &mut rng)?;
            let mut model = init.model;
            let history = joint_train(&mut model, x, cfg, labels, &mut rng)?;
            (model, history, Some(init.pseudo_labels), Some(init.report), false)
        }
        TrainingMode::PretrainOnly => {
            let init = pretrain_with(x, cfg, &mut rng)?;
            let mut history = History::default();
            history.records.push(record(&init.model, x, 0, None, false)?);
            if let (Some(truth), Some(first)) = (labels, history.records.first_mut()) {
                first.scores = Some(Scores::compute(truth, &init.pseudo_labels)?);
            }
            (init.model, history, Some(init.pseudo_labels), Some(init.report), false)
        }
        TrainingMode::ReconstructionOnly => {
            let init = pretrain_with(x, cfg, &mut rng)?;
            let mut model = init.model;
            let mut history = History::default();
            history.records.push(record(&model, x, 0, labels, true)?);
            let run = train_bank_reconstruction_only(&mut model.bank, x, cfg, &mut rng)?;
            for (epoch, _) in run.losses.iter().enumerate() {
                // the gate is untouched here; log the bank objective instead
                let scores = match labels {
                    Some(truth) if epoch + 1 == run.losses.len() => {
                        Some(Scores::compute(truth, &predict(&model, x, true)?)?)
                    }
                    _ => None,
                };
                history.records.push(EpochRecord {
                    epoch: epoch + 1,
                    loss: run.losses[epoch],
                    scores,
                });
            }
            history.stopped_early = run.stopped_early;
            active_experts = run.active_experts;
            (model, history, Some(init.pseudo_labels), Some(init.report), true)
        }
    };
    let final_labels = match (cfg.mode, &pseudo) {
        (TrainingMode::PretrainOnly, Some(p)) => p.clone(),
        _ => predict(&model, x, by_reconstruction)?,
    };
    Ok(FitOutput {
        model,
        history,
        pseudo_labels: pseudo,
        init_report: report,
        active_experts,
        labels: final_labels,
    })
}
