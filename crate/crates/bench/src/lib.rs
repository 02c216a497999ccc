//! Seeded inputs shared by the benchmarks.

use damic_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

/// Rows are softmax-normalised random logits.
pub fn stochastic_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut m = uniform_matrix(rows, cols, seed).map(|v| (4.0 * v).exp());
    for r in 0..rows {
        let row = m.row_mut(r);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    m
}

/// Two labelings over `k` classes that agree on roughly `overlap` of points.
pub fn noisy_labels(n: usize, k: usize, overlap: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let pred = truth
        .iter()
        .map(|&t| {
            if rng.random::<f64>() < overlap {
                (t + 1) % k
            } else {
                rng.random_range(0..k)
            }
        })
        .collect();
    (truth, pred)
}
