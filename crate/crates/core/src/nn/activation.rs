//! Scalar and row-wise transfer functions.

use super::Matrix;

/// ELU with α = 1.
#[inline]
pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Logistic sigmoid evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of one row using max subtraction.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let mut out = row.to_vec();
    softmax_inplace(&mut out);
    out
}

pub fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

/// `log Σ exp(row)`, stable. Returns `-inf` for an empty row.
pub fn logsumexp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Row-wise softmax of a matrix of logits.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_inplace(out.row_mut(r));
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let lse = logsumexp(row);
        row.iter_mut().for_each(|x| *x -= lse);
    }
    out
}

/// Transfer function tag stored in a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Sigmoid,
    Softmax,
    Identity,
}

impl Activation {
    pub fn apply(self, x: &Matrix) -> Matrix {
        match self {
            Activation::Elu => x.map(elu),
            Activation::Sigmoid => x.map(sigmoid),
            Activation::Softmax => softmax_rows(x),
            Activation::Identity => x.clone(),
        }
    }

    /// Gradient with respect to the pre-activation given the cached output.
    pub fn backward(self, output: &Matrix, d_out: &Matrix) -> Matrix {
        match self {
            Activation::Identity => d_out.clone(),
            Activation::Elu => {
                let data = output
                    .as_slice()
                    .iter()
                    .zip(d_out.as_slice())
                    // y >= 0 iff x >= 0; for x < 0, dy/dx = e^x = y + 1
                    .map(|(&y, &g)| if y >= 0.0 { g } else { g * (y + 1.0) })
                    .collect();
                Matrix::new(output.rows(), output.cols(), data).expect("same shape")
            }
            Activation::Sigmoid => {
                let data = output
                    .as_slice()
                    .iter()
                    .zip(d_out.as_slice())
                    .map(|(&y, &g)| g * y * (1.0 - y))
                    .collect();
                Matrix::new(output.rows(), output.cols(), data).expect("same shape")
            }
            Activation::Softmax => {
                let mut dx = Matrix::zeros(output.rows(), output.cols());
                for r in 0..output.rows() {
                    let y = output.row(r);
                    let g = d_out.row(r);
                    let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                    for (d, (yi, gi)) in dx.row_mut(r).iter_mut().zip(y.iter().zip(g)) {
                        *d = yi * (gi - dot);
                    }
                }
                dx
            }
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Elu => 0,
            Activation::Sigmoid => 1,
            Activation::Softmax => 2,
            Activation::Identity => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Activation::Elu,
            1 => Activation::Sigmoid,
            2 => Activation::Softmax,
            3 => Activation::Identity,
            _ => return None,
        })
    }
}
