//! Brute-force oracles and seeded instance generators shared by the
//! integration tests. Nothing here calls into the code paths it checks.

#![allow(dead_code)]

use klvq::{Dataset, Distribution, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Full sort of every candidate by (squared distance, index); first k.
pub fn brute_knn(rows: &[Vec<f64>], query: &[f64], k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != exclude)
        .map(|(j, r)| {
            let d: f64 = r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, j)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Term-by-term KL(p || q) in nats; `None` when p > 0 meets q = 0.
pub fn brute_kl(p: &[f64], q: &[f64]) -> Option<f64> {
    let mut total = 0.0;
    for c in 0..p.len() {
        if p[c] == 0.0 {
            continue;
        }
        if q[c] == 0.0 {
            return None;
        }
        total += p[c] * (p[c] / q[c]).ln();
    }
    Some(total)
}

/// Row-wise argmin over every (point, subset) KL, lowest subset on ties.
pub fn brute_assign(points: &[Vec<f64>], subsets: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_kl = f64::INFINITY;
            for (m, q) in subsets.iter().enumerate() {
                let kl = brute_kl(p, q).expect("reference distribution covers support");
                if kl < best_kl {
                    best_kl = kl;
                    best = m;
                }
            }
            best
        })
        .collect()
}

/// Objective as the triple sum over (class, subset, member point).
pub fn brute_objective(points: &[Vec<f64>], assignment: &[usize], subsets: &[Vec<f64>]) -> f64 {
    let classes = subsets[0].len();
    let mut total = 0.0;
    for y in 0..classes {
        for (m, q) in subsets.iter().enumerate() {
            for (i, p) in points.iter().enumerate() {
                if assignment[i] != m || p[y] == 0.0 {
                    continue;
                }
                total += p[y] * (p[y] / q[y]).ln();
            }
        }
    }
    total
}

/// Nearest centroid by a full scan, lowest index on ties.
pub fn brute_nearest(centroids: &[Vec<f64>], query: &[f64]) -> usize {
    let dists: Vec<f64> = centroids
        .iter()
        .map(|c| c.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    dists.iter().position(|&d| d == min).unwrap()
}

pub fn probs(d: &Distribution) -> Vec<f64> {
    d.probs().to_vec()
}

pub fn rows_of(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

/// Random distribution over `classes`; about a third of entries zeroed
/// when `allow_zeros`.
pub fn random_distribution(rng: &mut ChaCha8Rng, classes: usize, allow_zeros: bool) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..classes)
            .map(|_| {
                if allow_zeros && rng.random_bool(0.33) {
                    0.0
                } else {
                    rng.random_range(0.01..1.0)
                }
            })
            .collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            v.iter_mut().for_each(|x| *x /= s);
            return v;
        }
    }
}

/// Random labelled dataset. Coordinates are small integers when `grid` is
/// set so that distance ties are common.
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    classes: usize,
    grid: bool,
) -> Dataset {
    let data: Vec<f64> = (0..n * d)
        .map(|_| {
            if grid {
                f64::from(rng.random_range(-3i32..=3))
            } else {
                rng.random_range(-5.0..5.0)
            }
        })
        .collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    Dataset::new(Matrix::from_vec(n, d, data).unwrap(), labels, names).unwrap()
}

/// Spatially clustered dataset whose labels depend on the cluster, so kNN
/// label distributions carry structure.
pub fn clustered_dataset(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    classes: usize,
    clusters: usize,
) -> Dataset {
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect();
    let bias: Vec<Vec<f64>> = (0..clusters)
        .map(|_| random_distribution(rng, classes, false))
        .collect();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let g = rng.random_range(0..clusters);
        for &c in &centers[g] {
            data.push(c + rng.random_range(-2.0..2.0));
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut label = classes - 1;
        for (c, &w) in bias[g].iter().enumerate() {
            acc += w;
            if u < acc {
                label = c;
                break;
            }
        }
        labels.push(label);
    }
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    Dataset::new(Matrix::from_vec(n, d, data).unwrap(), labels, names).unwrap()
}

/// `groups` far-apart tight clusters; cluster g holds `label_counts[g][c]`
/// points of class c. With k = cluster size every point's kNN label
/// distribution equals its cluster's label frequency.
pub fn grouped_dataset(rng: &mut ChaCha8Rng, label_counts: &[Vec<usize>]) -> Dataset {
    let classes = label_counts[0].len();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (g, counts) in label_counts.iter().enumerate() {
        for (c, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                data.push(100.0 * g as f64 + rng.random_range(-0.5..0.5));
                data.push(rng.random_range(-0.5..0.5));
                labels.push(c);
            }
        }
    }
    let n = labels.len();
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    Dataset::new(Matrix::from_vec(n, 2, data).unwrap(), labels, names).unwrap()
}
