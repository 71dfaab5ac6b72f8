mod common;

use klvq::{kmeans_assign, kmeans_fit, KmeansConfig, Matrix};
use proptest::prelude::*;
use rand::Rng;

use common::{brute_nearest, clustered_dataset, rng, rows_of};

fn random_points(seed: u64, n: usize, d: usize) -> Matrix<f64> {
    let mut r = rng(seed);
    let data = (0..n * d).map(|_| r.random_range(-20.0..20.0)).collect();
    Matrix::from_vec(n, d, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inertia_never_increases(seed: u64, n in 2usize..=150, d in 1usize..=5, k in 1usize..=10) {
        let k = k.min(n);
        let points = random_points(seed, n, d);
        let fit = kmeans_fit(&points, &KmeansConfig::new(k, seed)).unwrap();
        for w in fit.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", fit.inertia_trace);
        }
        prop_assert_eq!(fit.inertia_trace.len(), fit.model.iterations_run);
        prop_assert!(fit.partition.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn assign_is_nearest_centroid(seed: u64, k in 1usize..=8) {
        let points = random_points(seed, 60, 3);
        let fit = kmeans_fit(&points, &KmeansConfig::new(k, seed)).unwrap();
        let centroids = rows_of(&fit.model.centroids);
        let mut r = rng(seed ^ 0x5eed);
        for _ in 0..40 {
            let q: Vec<f64> = (0..3).map(|_| r.random_range(-25.0..25.0)).collect();
            prop_assert_eq!(kmeans_assign(&fit.model, &q).unwrap(), brute_nearest(&centroids, &q));
        }
    }
}

#[test]
fn single_cluster_closed_form() {
    for seed in 0..10 {
        let points = random_points(seed, 97, 4);
        let rows = rows_of(&points);
        let mean: Vec<f64> = (0..4)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
            .collect();
        let spread: f64 = rows
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&mean)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum();
        let fit = kmeans_fit(&points, &KmeansConfig::new(1, seed)).unwrap();
        for (got, want) in fit.model.centroids.row(0).iter().zip(&mean) {
            assert!((got - want).abs() <= 1e-12);
        }
        assert!((fit.model.inertia - spread).abs() <= 1e-12 * spread.max(1.0));
    }
}

#[test]
fn one_cluster_per_point() {
    for seed in 0..10 {
        let points = random_points(seed, 30, 3);
        let fit = kmeans_fit(&points, &KmeansConfig::new(30, seed)).unwrap();
        assert!(fit.model.inertia.abs() <= 1e-12);
        assert_eq!(fit.partition.sizes(), vec![1; 30]);
    }
}

#[test]
fn same_seed_same_fit() {
    let mut r = rng(4);
    let ds = clustered_dataset(&mut r, 200, 3, 2, 5);
    let config = KmeansConfig::new(6, 11);
    assert_eq!(
        kmeans_fit(ds.features(), &config).unwrap(),
        kmeans_fit(ds.features(), &config).unwrap()
    );
}

#[test]
fn converged_partition_is_nearest_assignment() {
    let mut r = rng(6);
    let ds = clustered_dataset(&mut r, 150, 2, 2, 4);
    let fit = kmeans_fit(ds.features(), &KmeansConfig::new(4, 2)).unwrap();
    assert!(fit.model.converged);
    let centroids = rows_of(&fit.model.centroids);
    for (row, &m) in ds.features().iter_rows().zip(fit.partition.assignment()) {
        assert_eq!(brute_nearest(&centroids, row), m);
    }
}
