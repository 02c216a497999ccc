//! Datasets: synthetic generation, file loaders, normalization and
//! persistence.

mod container;
mod export;
mod idx;
mod synthetic;
mod text;

pub use container::{load_dataset, save_dataset, BinReader, BinWriter};
pub use export::{load_assignments, save_assignments, Assignments};
pub use idx::{load_idx, write_idx_images, write_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synthetic::{
    gen_synthetic, mixing_matrix, observe, SyntheticData, SyntheticSpec,
};
pub use text::{
    load_dense_csv, load_labels, load_sparse_triplets, min_max_normalize, read_dense_csv,
    save_dense_csv, save_labels,
};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// How raw values were mapped into `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Normalization {
    None,
    /// Every value divided by the same constant (255 for images).
    Scale(f64),
    /// Per-feature `(x − min) / (max − min)`; constant features map to 0.
    MinMax { min: Vec<f64>, max: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Option<Vec<usize>>,
    pub name: String,
    pub normalization: Normalization,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Option<Vec<usize>>, name: impl Into<String>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return Err(Error::Consistency(format!(
                    "{} labels for {} samples",
                    l.len(),
                    x.rows()
                )));
            }
        }
        Ok(Self {
            x,
            labels,
            name: name.into(),
            normalization: Normalization::None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Number of distinct ground-truth classes, if labelled.
    pub fn classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// The rows at `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            name: self.name.clone(),
            normalization: self.normalization.clone(),
        }
    }

    /// A seeded random subset of `n` rows (all rows if `n >= len`).
    pub fn random_subset(&self, n: usize, seed: u64) -> Self {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        if n >= idx.len() {
            return self.clone();
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        idx.truncate(n);
        idx.sort_unstable();
        self.subset(&idx)
    }
}
