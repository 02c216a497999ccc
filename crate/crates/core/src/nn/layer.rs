use rand::Rng;

use super::{Activation, Matrix};
use crate::error::{Error, Result};

/// Forward-pass mode. `Eval` uses batch-norm running statistics and never
/// mutates the network; its caches can still be back-propagated, which
/// treats batch normalization as a fixed affine map ("frozen").
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `y = x Wᵀ + b` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl AffineLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// Uniform He-style initialization: `U(-√(6/fan_in), √(6/fan_in))`, zero bias.
    pub fn he_uniform(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / input.max(1) as f64).sqrt();
        let weight = Matrix::from_fn(output, input, |_, _| rng.random_range(-limit..limit));
        Self {
            weight,
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("affine forward", self.input_dim(), x.cols()));
        }
        let mut y = x.matmul_t(&self.weight)?;
        y.add_row_vector(&self.bias);
        Ok(y)
    }

    /// Returns `(dX, dW, db)`.
    pub fn backward(&self, input: &Matrix, dy: &Matrix) -> Result<(Matrix, Matrix, Vec<f64>)> {
        let dw = dy.t_matmul(input)?;
        let db = dy.column_sums();
        let dx = dy.matmul(&self.weight)?;
        Ok((dx, dw, db))
    }
}

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

/// Per-feature batch normalization. Running statistics follow
/// `running = momentum·running + (1 − momentum)·batch`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

pub(crate) struct BatchNormCache {
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
    pub batch_stats: bool,
}

impl BatchNormLayer {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub(crate) fn forward(
        &mut self,
        x: &Matrix,
        mode: Mode,
    ) -> Result<(Matrix, BatchNormCache)> {
        let (n, f) = x.shape();
        if f != self.features() {
            return Err(Error::shape("batch-norm forward", self.features(), f));
        }
        let (mean, var) = match mode {
            Mode::Train if n > 0 => {
                let mean: Vec<f64> = x.column_sums().iter().map(|s| s / n as f64).collect();
                let mut var = vec![0.0; f];
                for row in x.row_iter() {
                    for ((v, xi), m) in var.iter_mut().zip(row).zip(&mean) {
                        let d = xi - m;
                        *v += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                let unbias = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
                for j in 0..f {
                    self.running_mean[j] =
                        self.momentum * self.running_mean[j] + (1.0 - self.momentum) * mean[j];
                    self.running_var[j] = self.momentum * self.running_var[j]
                        + (1.0 - self.momentum) * var[j] * unbias;
                }
                (mean, var)
            }
            _ => (self.running_mean.clone(), self.running_var.clone()),
        };
        Ok(self.normalize(x, &mean, &var, mode == Mode::Train))
    }

    /// Same as an eval-mode forward but through `&self`.
    pub(crate) fn forward_frozen(&self, x: &Matrix) -> Result<(Matrix, BatchNormCache)> {
        if x.cols() != self.features() {
            return Err(Error::shape("batch-norm forward", self.features(), x.cols()));
        }
        Ok(self.normalize(x, &self.running_mean, &self.running_var, false))
    }

    fn normalize(
        &self,
        x: &Matrix,
        mean: &[f64],
        var: &[f64],
        batch_stats: bool,
    ) -> (Matrix, BatchNormCache) {
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut xhat = x.clone();
        let mut y = x.clone();
        for r in 0..x.rows() {
            let xr = xhat.row_mut(r);
            for j in 0..xr.len() {
                xr[j] = (xr[j] - mean[j]) * inv_std[j];
            }
            let yr = y.row_mut(r);
            for j in 0..yr.len() {
                yr[j] = self.gamma[j] * xhat[(r, j)] + self.beta[j];
            }
        }
        (
            y,
            BatchNormCache {
                xhat,
                inv_std,
                batch_stats,
            },
        )
    }

    /// Returns `(dX, dγ, dβ)`.
    pub(crate) fn backward(
        &self,
        cache: &BatchNormCache,
        dy: &Matrix,
    ) -> (Matrix, Vec<f64>, Vec<f64>) {
        let (n, f) = dy.shape();
        let mut dgamma = vec![0.0; f];
        let mut dbeta = vec![0.0; f];
        for r in 0..n {
            for j in 0..f {
                dgamma[j] += dy[(r, j)] * cache.xhat[(r, j)];
                dbeta[j] += dy[(r, j)];
            }
        }
        let mut dx = Matrix::zeros(n, f);
        if cache.batch_stats {
            // dx = inv_std/n · (n·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
            let nf = n as f64;
            for j in 0..f {
                let g = self.gamma[j];
                let sum_dxhat = dbeta[j] * g;
                let sum_dxhat_xhat = dgamma[j] * g;
                for r in 0..n {
                    let dxhat = dy[(r, j)] * g;
                    dx[(r, j)] = cache.inv_std[j] / nf
                        * (nf * dxhat - sum_dxhat - cache.xhat[(r, j)] * sum_dxhat_xhat);
                }
            }
        } else {
            for r in 0..n {
                for j in 0..f {
                    dx[(r, j)] = dy[(r, j)] * self.gamma[j] * cache.inv_std[j];
                }
            }
        }
        (dx, dgamma, dbeta)
    }
}

/// One element of a [`MultiLayerNet`](super::MultiLayerNet).
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Affine(AffineLayer),
    BatchNorm(BatchNormLayer),
    Activation(Activation),
}
