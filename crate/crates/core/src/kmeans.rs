//! k-means with k-means++ seeding and Lloyd iterations.
//!
//! Used both as the raw-feature baseline and to cluster autoencoder
//! bottleneck activations during pretraining.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// `k × dim` cluster means.
#[derive(Clone, Debug, PartialEq)]
pub struct Centroids {
    pub means: Matrix,
}

impl Centroids {
    pub fn new(means: Matrix) -> Result<Self> {
        if means.rows() == 0 {
            return Err(Error::Input("k must be at least 1".into()));
        }
        Ok(Self { means })
    }

    pub fn k(&self) -> usize {
        self.means.rows()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KmeansConfig {
    pub max_iter: usize,
    /// Stop once the relative inertia improvement falls below this.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
            restarts: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KmeansResult {
    pub centroids: Centroids,
    pub labels: Vec<usize>,
    /// `Σ_t ‖x_t − μ_{label(t)}‖²`.
    pub inertia: f64,
    pub iterations: usize,
    /// Clusters that received no points in the final assignment.
    pub empty_clusters: Vec<usize>,
}

/// One Lloyd iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct LloydStep {
    /// Nearest centroid under the input centroids.
    pub labels: Vec<usize>,
    /// Means of the new clusters; empty clusters keep their previous mean.
    pub centroids: Centroids,
    /// Inertia of `labels` against the updated centroids.
    pub inertia: f64,
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest centroid; ties go to the lowest index.
pub fn nearest(point: &[f64], centroids: &Centroids) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.means.row_iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding: the first centre uniformly, each next one with
/// probability proportional to the squared distance to the closest chosen
/// centre. Always returns `k` distinct data indices.
pub fn kmeanspp_init(x: &Matrix, k: usize, rng: &mut impl Rng) -> Result<Centroids> {
    let n = x.rows();
    if k == 0 {
        return Err(Error::Input("k must be at least 1".into()));
    }
    if n < k {
        return Err(Error::Input(format!("need at least k={k} points, got {n}")));
    }
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut closest: Vec<f64> = x
        .row_iter()
        .map(|p| squared_distance(p, x.row(first)))
        .collect();
    while chosen.len() < k {
        let weights: Vec<f64> = closest
            .iter()
            .zip(&taken)
            .map(|(&d, &t)| if t { 0.0 } else { d })
            .collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(dist) => dist.sample(rng),
            // every remaining point coincides with a centre
            Err(_) => {
                let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        chosen.push(next);
        taken[next] = true;
        for (d, p) in closest.iter_mut().zip(x.row_iter()) {
            *d = d.min(squared_distance(p, x.row(next)));
        }
    }
    Ok(Centroids {
        means: x.select_rows(&chosen),
    })
}

/// Nearest-centroid labels and squared distances.
pub fn assign(x: &Matrix, centroids: &Centroids) -> (Vec<usize>, Vec<f64>) {
    x.row_iter().map(|p| nearest(p, centroids)).unzip()
}

/// Per-cluster means of `labels`; clusters without points keep `previous`.
pub fn cluster_means(x: &Matrix, labels: &[usize], previous: &Centroids) -> Centroids {
    let (k, dim) = (previous.k(), previous.dim());
    let mut sums = Matrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (p, &l) in x.row_iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(p) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            sums.row_mut(c).copy_from_slice(previous.means.row(c));
        } else {
            sums.row_mut(c).iter_mut().for_each(|s| *s /= count as f64);
        }
    }
    Centroids { means: sums }
}

pub fn inertia(x: &Matrix, labels: &[usize], centroids: &Centroids) -> f64 {
    x.row_iter()
        .zip(labels)
        .map(|(p, &l)| squared_distance(p, centroids.means.row(l)))
        .sum()
}

pub fn lloyd_step(x: &Matrix, centroids: &Centroids) -> Result<LloydStep> {
    if x.cols() != centroids.dim() {
        return Err(Error::shape("lloyd_step", centroids.dim(), x.cols()));
    }
    let (labels, _) = assign(x, centroids);
    let updated = cluster_means(x, &labels, centroids);
    let inertia = inertia(x, &labels, &updated);
    Ok(LloydStep {
        labels,
        centroids: updated,
        inertia,
    })
}

fn empty_clusters(labels: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    (0..k).filter(|&c| counts[c] == 0).collect()
}

/// Lloyd iterations from the given starting centroids.
pub fn kmeans_from(x: &Matrix, init: Centroids, max_iter: usize, tol: f64) -> Result<KmeansResult> {
    let mut centroids = init;
    let mut labels = Vec::new();
    let mut prev = f64::INFINITY;
    let mut current = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter.max(1) {
        let step = lloyd_step(x, &centroids)?;
        iterations += 1;
        current = step.inertia;
        labels = step.labels;
        centroids = step.centroids;
        let improvement = prev - current;
        if prev.is_finite() && improvement <= tol * prev.max(f64::MIN_POSITIVE) {
            break;
        }
        prev = current;
    }
    let (final_labels, _) = assign(x, &centroids);
    // the last update can move a point to a different centre; keep labels and
    // inertia consistent with the returned centroids
    if final_labels != labels {
        labels = final_labels;
        current = inertia(x, &labels, &centroids);
    }
    Ok(KmeansResult {
        empty_clusters: empty_clusters(&labels, centroids.k()),
        centroids,
        labels,
        inertia: current,
        iterations,
    })
}

/// Best-inertia k-means over `cfg.restarts` k-means++ seedings; restart `r`
/// draws from a generator seeded with `cfg.seed + r`.
pub fn kmeans_fit(x: &Matrix, k: usize, cfg: &KmeansConfig) -> Result<KmeansResult> {
    if k == 0 || x.rows() < k {
        return Err(Error::Input(format!(
            "need at least k={k} points (k >= 1), got {}",
            x.rows()
        )));
    }
    let mut best: Option<KmeansResult> = None;
    for r in 0..cfg.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
        let init = kmeanspp_init(x, k, &mut rng)?;
        let result = kmeans_from(x, init, cfg.max_iter, cfg.tol)?;
        if best.as_ref().is_none_or(|b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}
