//! Brute-force oracles and seeded instance generators shared by the
//! integration tests and the acceptance target.
#![allow(dead_code)]

use std::collections::BTreeSet;

use fdrcast_core::faults::{ClusteringConfig, FaultCluster, FaultClusters, Reducer, Selection};
use fdrcast_core::mutation::OutcomeMatrix;
use fdrcast_core::seed;
use fdrcast_core::MsVariant;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed_value: u64) -> ChaCha8Rng {
    seed::rng(seed_value)
}

/// Raw predictions behind an outcome matrix, kept for the oracles.
#[derive(Debug, Clone)]
pub struct Outcomes {
    pub labels: Vec<usize>,
    pub original: Vec<usize>,
    /// One column per mutant.
    pub mutants: Vec<Vec<usize>>,
    pub num_classes: usize,
}

impl Outcomes {
    pub fn matrix(&self) -> OutcomeMatrix {
        let ids = (0..self.mutants.len()).collect();
        OutcomeMatrix::from_parts(self.original.clone(), self.mutants.clone(), Some(self.labels.clone()), ids).unwrap()
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }
}

/// Random pool: the original is right ~80% of the time, each mutant flips a
/// prediction with a per-mutant rate.
pub fn random_outcomes(r: &mut ChaCha8Rng, n: usize, m: usize, c: usize) -> Outcomes {
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let original: Vec<usize> =
        labels.iter().map(|&l| if r.random_bool(0.8) { l } else { r.random_range(0..c) }).collect();
    let mutants = (0..m)
        .map(|_| {
            let rate = r.random_range(0.02..0.5);
            original.iter().map(|&o| if r.random_bool(rate) { r.random_range(0..c) } else { o }).collect()
        })
        .collect();
    Outcomes { labels, original, mutants, num_classes: c }
}

pub fn random_subset(r: &mut ChaCha8Rng, n: usize, max_len: usize) -> Vec<usize> {
    let len = r.random_range(1..=max_len);
    (0..len).map(|_| r.random_range(0..n)).collect()
}

pub fn ms_oracle(o: &Outcomes, subset: &[usize], variant: MsVariant) -> f64 {
    let m = o.mutants.len();
    let kills = |i: usize, t: usize| o.labels[t] == o.original[t] && o.mutants[i][t] != o.original[t];
    let members: BTreeSet<usize> = subset.iter().copied().collect();
    match variant {
        MsVariant::Standard => {
            (0..m).filter(|&i| members.iter().any(|&t| kills(i, t))).count() as f64 / m as f64
        }
        MsVariant::DeepMutation => {
            let mut pairs = BTreeSet::new();
            for i in 0..m {
                for &t in &members {
                    if kills(i, t) {
                        pairs.insert((i, o.original[t]));
                    }
                }
            }
            pairs.len() as f64 / (m * o.num_classes) as f64
        }
        MsVariant::KsBased => {
            let per_input =
                |t: usize| (0..m).filter(|&i| o.mutants[i][t] != o.original[t]).count() as f64 / m as f64;
            subset.iter().map(|&t| per_input(t)).sum::<f64>() / subset.len() as f64
        }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette over non-noise points, straight from the definition.
pub fn silhouette_oracle(points: &[Vec<f64>], labels: &[Option<usize>]) -> Option<f64> {
    let ids: BTreeSet<usize> = labels.iter().flatten().copied().collect();
    if ids.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..points.len() {
        let Some(own) = labels[i] else { continue };
        count += 1;
        let mean_to = |c: usize| {
            let d: Vec<f64> = (0..points.len())
                .filter(|&j| j != i && labels[j] == Some(c))
                .map(|j| euclid(&points[i], &points[j]))
                .collect();
            (d.iter().sum::<f64>() / d.len() as f64, d.len())
        };
        let (a, same) = mean_to(own);
        if same == 0 {
            continue;
        }
        let b = ids.iter().filter(|&&c| c != own).map(|&c| mean_to(c).0).fold(f64::INFINITY, f64::min);
        let s = (b - a) / a.max(b);
        total += if s.is_nan() { 0.0 } else { s };
    }
    Some(total / count as f64)
}

/// Pearson of ranks, where a value's rank is 1 + #smaller + (#ties - 1) / 2.
pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let smaller = v.iter().filter(|&&b| b < a).count() as f64;
                let ties = v.iter().filter(|&&b| b == a).count() as f64;
                1.0 + smaller + (ties - 1.0) / 2.0
            })
            .collect()
    };
    pearson(&rank(x), &rank(y))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Least squares through the normal equations, solved by Gauss-Jordan
/// elimination with partial pivoting. `degree` 1 or 2.
pub fn normal_equations(points: &[(f64, f64)], degree: usize) -> Vec<f64> {
    let p = degree + 1;
    let mut a = vec![vec![0.0; p + 1]; p];
    for &(x, y) in points {
        let phi: Vec<f64> = (0..p).map(|k| x.powi(k as i32)).collect();
        for i in 0..p {
            for j in 0..p {
                a[i][j] += phi[i] * phi[j];
            }
            a[i][p] += phi[i] * y;
        }
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for row in 0..p {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=p {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

pub fn poly(beta: &[f64], x: f64) -> f64 {
    beta.iter().enumerate().map(|(k, b)| b * x.powi(k as i32)).sum()
}

/// Per-fold replay of cross-validation for a polynomial family.
pub struct FoldReplay {
    pub mean_r2: f64,
    pub mean_mmre: f64,
    pub mean_rmse: f64,
}

pub fn cv_replay(points: &[(f64, f64)], folds: &[Vec<usize>], degree: usize) -> FoldReplay {
    let (mut r2s, mut mmres, mut rmses) = (Vec::new(), Vec::new(), Vec::new());
    for fold in folds {
        let held: BTreeSet<usize> = fold.iter().copied().collect();
        let train: Vec<(f64, f64)> =
            (0..points.len()).filter(|i| !held.contains(i)).map(|i| points[i]).collect();
        let beta = normal_equations(&train, degree);
        let ys: Vec<f64> = fold.iter().map(|&i| points[i].1).collect();
        let pred: Vec<f64> = fold.iter().map(|&i| poly(&beta, points[i].0).clamp(0.0, 1.0)).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let sse: f64 = ys.iter().zip(&pred).map(|(y, p)| (y - p).powi(2)).sum();
        let sst: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
        if sst > 0.0 {
            r2s.push(1.0 - sse / sst);
        }
        let rel: Vec<f64> = ys.iter().zip(&pred).filter(|(y, _)| **y > 0.0).map(|(y, p)| (p - y).abs() / y).collect();
        if !rel.is_empty() {
            mmres.push(rel.iter().sum::<f64>() / rel.len() as f64);
        }
        rmses.push((sse / ys.len() as f64).sqrt());
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    FoldReplay { mean_r2: avg(&r2s), mean_mmre: avg(&mmres), mean_rmse: avg(&rmses) }
}

/// Fault clusters with an identity reducer over `dims` features.
pub fn clusters_with_cores(dims: usize, cores: Vec<Vec<Vec<f64>>>) -> FaultClusters<f64> {
    let components = (0..dims).map(|i| (0..dims).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    FaultClusters {
        reducer: Reducer { mean: vec![0.0; dims], components },
        clusters: cores
            .into_iter()
            .enumerate()
            .map(|(id, core_points)| FaultCluster { id, members: Vec::new(), core_points })
            .collect(),
        silhouette: 0.0,
        selected: Selection { eps: 1.0, min_pts: 1, noise: 0 },
        config: ClusteringConfig::default(),
    }
}

/// Id of the cluster owning the nearest core point; first id wins ties.
pub fn nearest_core_oracle(clusters: &FaultClusters<f64>, projected: &[f64]) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for c in &clusters.clusters {
        for p in &c.core_points {
            let d = euclid(projected, p);
            if d < best.0 || (d == best.0 && c.id < best.1) {
                best = (d, c.id);
            }
        }
    }
    best.1
}

/// Distinct clusters hit by a subset over the detectable denominator.
pub fn fdr_oracle(map: &[Option<usize>], subset: &[usize], denominator: usize) -> f64 {
    let hit: BTreeSet<usize> = subset.iter().filter_map(|&t| map[t]).collect();
    hit.len() as f64 / denominator as f64
}

/// Two well-separated Gaussian blobs in `dims` dimensions.
pub fn two_blobs(r: &mut ChaCha8Rng, per_blob: usize, dims: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for centre in [0.0, 20.0] {
        for _ in 0..per_blob {
            rows.push((0..dims).map(|_| centre + r.random_range(-0.5..0.5)).collect());
        }
    }
    rows
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}
