use damic_core::kmeans::{assign, inertia, kmeans_fit, kmeanspp_init, lloyd_step, squared_distance, Centroids, KmeansConfig};
use damic_core::Matrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn points() -> impl Strategy<Value = Matrix> {
    (4usize..30, 1usize..4).prop_flat_map(|(n, d)| {
        prop::collection::vec(-10.0f64..10.0, n * d).prop_map(move |v| Matrix::new(n, d, v).unwrap())
    })
}

proptest! {
    #[test]
    fn lloyd_never_increases_inertia(x in points(), k in 1usize..4, seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = kmeanspp_init(&x, k, &mut rng).unwrap();
        let (labels, _) = assign(&x, &c);
        let mut prev = inertia(&x, &labels, &c);
        for _ in 0..8 {
            let step = lloyd_step(&x, &c).unwrap();
            prop_assert!(step.inertia <= prev + 1e-9 * prev.max(1.0));
            prev = step.inertia;
            c = step.centroids;
        }
    }

    #[test]
    fn assignment_is_nearest_centroid(x in points(), seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = kmeanspp_init(&x, 3.min(x.rows()), &mut rng).unwrap();
        let (labels, dists) = assign(&x, &c);
        for (t, &l) in labels.iter().enumerate() {
            let best = (0..c.k()).map(|j| squared_distance(x.row(t), c.means.row(j))).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(squared_distance(x.row(t), c.means.row(l)), best);
            prop_assert_eq!(dists[t], best);
        }
    }

    #[test]
    fn seeding_picks_data_points(x in points(), seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = kmeanspp_init(&x, 2, &mut rng).unwrap();
        for j in 0..c.k() {
            prop_assert!(x.row_iter().any(|r| r == c.means.row(j)));
        }
    }

    #[test]
    fn fit_is_deterministic_per_seed(x in points(), seed in 0u64..20) {
        let cfg = KmeansConfig { seed, restarts: 3, ..KmeansConfig::default() };
        let a = kmeans_fit(&x, 2, &cfg).unwrap();
        let b = kmeans_fit(&x, 2, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn separated_blobs_are_recovered() {
    let rows: Vec<[f64; 2]> = (0..30)
        .map(|i| {
            let c = (i % 3) as f64 * 20.0;
            [c + (i as f64 * 0.37).sin(), c + (i as f64 * 0.71).cos()]
        })
        .collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let r = kmeans_fit(&x, 3, &KmeansConfig::default()).unwrap();
    for i in 0..30 {
        assert_eq!(r.labels[i], r.labels[i % 3]);
    }
    assert!(r.empty_clusters.is_empty());
}

#[test]
fn rejects_more_clusters_than_points() {
    let x = Matrix::zeros(2, 2);
    assert!(kmeans_fit(&x, 3, &KmeansConfig::default()).is_err());
    assert!(Centroids::new(Matrix::zeros(0, 2)).is_err());
}
