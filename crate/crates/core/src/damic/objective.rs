//! The mixture reconstruction objective, responsibilities and the two hard
//! assignment rules.

use crate::error::{Error, Result};
use crate::nn::{logsumexp, softmax_inplace, Matrix};

/// Floor applied to gate probabilities before taking logarithms.
pub const LOG_PROB_FLOOR: f64 = 1e-30;

/// Row-stochastic `n × k` responsibilities.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftAssignment {
    pub w: Matrix,
}

fn check(p: &Matrix, d: &Matrix) -> Result<()> {
    p.same_shape(d, "gate probabilities vs reconstruction errors")
}

/// `log P − D` with the probability floor.
fn log_joint(p: &Matrix, d: &Matrix) -> Matrix {
    let data = p
        .as_slice()
        .iter()
        .zip(d.as_slice())
        .map(|(&pi, &di)| pi.max(LOG_PROB_FLOOR).ln() - di)
        .collect();
    Matrix::new(p.rows(), p.cols(), data).expect("same shape")
}

/// `−Σ_t log Σ_i P[t][i]·exp(−D[t][i])` via log-sum-exp.
pub fn damic_loss(p: &Matrix, d: &Matrix) -> Result<f64> {
    check(p, d)?;
    Ok(log_joint(p, d).row_iter().map(|r| -logsumexp(r)).sum())
}

/// Per-row loss from log-probabilities (no floor needed).
pub(crate) fn loss_from_log_probs(log_p: &Matrix, d: &Matrix) -> Vec<f64> {
    log_p
        .row_iter()
        .zip(d.row_iter())
        .map(|(lp, di)| {
            let row: Vec<f64> = lp.iter().zip(di).map(|(a, b)| a - b).collect();
            -logsumexp(&row)
        })
        .collect()
}

/// `W[t][i] ∝ P[t][i]·exp(−D[t][i])`, a row softmax of `log P − D`.
pub fn soft_assign(p: &Matrix, d: &Matrix) -> Result<SoftAssignment> {
    check(p, d)?;
    let mut w = log_joint(p, d);
    for r in 0..w.rows() {
        softmax_inplace(w.row_mut(r));
    }
    Ok(SoftAssignment { w })
}

pub(crate) fn soft_assign_from_log_probs(log_p: &Matrix, d: &Matrix) -> Matrix {
    let mut w = log_p.clone();
    for r in 0..w.rows() {
        let row = w.row_mut(r);
        for (x, di) in row.iter_mut().zip(d.row(r)) {
            *x -= di;
        }
        softmax_inplace(row);
    }
    w
}

/// Row-wise argmax; ties go to the lowest index.
pub fn hard_assign(p: &Matrix) -> Vec<usize> {
    p.row_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Row-wise argmin; ties go to the lowest index.
pub fn assign_by_reconstruction(d: &Matrix) -> Vec<usize> {
    d.row_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v < row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Fraction of positions where two labellings agree.
pub fn agreement(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input("labellings differ in length".into()));
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64)
}

/// Number of clusters in `0..k` that receive no point.
pub fn count_empty(labels: &[usize], k: usize) -> usize {
    let mut seen = vec![false; k];
    labels.iter().filter(|&&l| l < k).for_each(|&l| seen[l] = true);
    seen.iter().filter(|s| !**s).count()
}
