use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, Matrix};

/// Gaussian clusters in a 2-D latent plane pushed through
/// `x = sigmoid(W v)²` into `obs_dim` dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_per_cluster: usize,
    pub means: Vec<[f64; 2]>,
    pub sigma: f64,
    pub obs_dim: usize,
    pub w_seed: u64,
    pub noise_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_cluster: 1000,
            means: vec![[0.0, 0.0], [6.0, 0.0], [0.0, 6.0], [6.0, 6.0]],
            sigma: 1.0,
            obs_dim: 100,
            w_seed: 0,
            noise_seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.obs_dim < 2 {
            return Err(Error::Input("obs_dim must be at least 2".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Input(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.means.is_empty() || self.n_per_cluster == 0 {
            return Err(Error::Input("need at least one non-empty cluster".into()));
        }
        Ok(())
    }
}

pub struct SyntheticData {
    pub dataset: Dataset,
    /// `n × 2` latent points `v_t`.
    pub latent: Matrix,
    /// `obs_dim × 2` mixing matrix.
    pub mixing: Matrix,
}

/// `obs_dim × 2` matrix of i.i.d. standard normal entries.
pub fn mixing_matrix(obs_dim: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid");
    Matrix::from_fn(obs_dim, 2, |_, _| normal.sample(&mut rng))
}

/// `sigmoid(W v_t)²` elementwise for every latent row.
pub fn observe(latent: &Matrix, mixing: &Matrix) -> Result<Matrix> {
    let mut x = latent.matmul_t(mixing)?;
    x.map_inplace(|z| {
        let s = sigmoid(z);
        s * s
    });
    Ok(x)
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mixing = mixing_matrix(spec.obs_dim, spec.w_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let noise = Normal::new(0.0, spec.sigma).expect("sigma validated");
    let n = spec.n_per_cluster * spec.means.len();
    let mut latent = Matrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in spec.means.iter().enumerate() {
        for i in 0..spec.n_per_cluster {
            let r = c * spec.n_per_cluster + i;
            latent[(r, 0)] = mean[0] + noise.sample(&mut rng);
            latent[(r, 1)] = mean[1] + noise.sample(&mut rng);
            labels.push(c);
        }
    }
    let x = observe(&latent, &mixing)?;
    Ok(SyntheticData {
        dataset: Dataset::new(x, Some(labels), "synthetic")?,
        latent,
        mixing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_latent_maps_to_quarter() {
        let w = mixing_matrix(10, 3);
        let x = observe(&Matrix::zeros(2, 2), &w).unwrap();
        assert!(x.as_slice().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn default_shape_range_and_labels() {
        let data = gen_synthetic(&SyntheticSpec::default()).unwrap();
        let ds = &data.dataset;
        assert_eq!(ds.x.shape(), (4000, 100));
        assert!(ds.x.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(ds.classes(), Some(4));
        assert_eq!(data.latent.shape(), (4000, 2));
    }

    #[test]
    fn fixed_seeds_reproduce_bits() {
        let spec = SyntheticSpec {
            n_per_cluster: 50,
            ..Default::default()
        };
        let a = gen_synthetic(&spec).unwrap();
        let b = gen_synthetic(&spec).unwrap();
        assert_eq!(a.dataset.x, b.dataset.x);
        let c = gen_synthetic(&SyntheticSpec {
            noise_seed: 99,
            ..spec
        })
        .unwrap();
        assert_ne!(a.dataset.x, c.dataset.x);
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SyntheticSpec {
                sigma: 0.0,
                ..Default::default()
            },
            SyntheticSpec {
                sigma: -1.0,
                ..Default::default()
            },
            SyntheticSpec {
                obs_dim: 1,
                ..Default::default()
            },
        ] {
            assert!(gen_synthetic(&spec).is_err());
        }
    }
}
