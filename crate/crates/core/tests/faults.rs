mod common;

use common::{assert_close, clusters_with_cores, fdr_oracle, nearest_core_oracle, rng, silhouette_oracle, two_blobs};
use fdrcast_core::faults::{dbscan, estimate_faults, silhouette, ClusteringConfig, DistanceMatrix, FdrCounter};
use fdrcast_core::Matrix;
use proptest::prelude::*;
use rand::Rng;

fn blob_config() -> ClusteringConfig {
    ClusteringConfig { pca_dims: 2, ..Default::default() }
}

#[test]
fn two_blobs_give_two_clusters() {
    let rows = two_blobs(&mut rng(1), 50, 4);
    let m = Matrix::from_rows(&rows).unwrap();
    let ids: Vec<usize> = (0..100).collect();
    let f = estimate_faults(&m, &ids, &blob_config()).unwrap();
    assert_eq!(f.len(), 2);
    assert!(f.silhouette > 0.9, "silhouette {}", f.silhouette);
    let first: Vec<usize> = f.clusters.iter().map(|c| c.members[0]).collect();
    assert_eq!(first, vec![0, 50]);
    assert!(f.clusters.iter().all(|c| !c.core_points.is_empty()));
}

#[test]
fn reported_silhouette_matches_oracle() {
    let rows = two_blobs(&mut rng(2), 30, 3);
    let m = Matrix::from_rows(&rows).unwrap();
    let ids: Vec<usize> = (0..60).collect();
    let f = estimate_faults(&m, &ids, &blob_config()).unwrap();
    let projected = f.reducer.project_all(&m).unwrap().to_rows();
    let mut labels = vec![None; 60];
    for c in &f.clusters {
        for &i in &c.members {
            labels[i] = Some(c.id);
        }
    }
    assert_close(f.silhouette, silhouette_oracle(&projected, &labels).unwrap(), 1e-9, "silhouette");
}

#[test]
fn identical_points_cannot_be_clustered() {
    let m = Matrix::from_rows(&vec![vec![1.0, 1.0, 1.0]; 30]).unwrap();
    let ids: Vec<usize> = (0..30).collect();
    assert!(estimate_faults(&m, &ids, &blob_config()).is_err());
}

#[test]
fn too_few_points_is_an_error() {
    let m = Matrix::from_rows(&two_blobs(&mut rng(3), 2, 3)).unwrap();
    assert!(estimate_faults(&m, &[0, 1, 2, 3], &blob_config()).is_err());
}

#[test]
fn clustering_ignores_row_order() {
    let rows = two_blobs(&mut rng(4), 40, 3);
    let perm: Vec<usize> = (0..80).rev().collect();
    let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
    let a = estimate_faults(&Matrix::from_rows(&rows).unwrap(), &(0..80).collect::<Vec<_>>(), &blob_config()).unwrap();
    let b = estimate_faults(&Matrix::from_rows(&shuffled).unwrap(), &perm, &blob_config()).unwrap();
    let groups = |f: &fdrcast_core::faults::FaultClusters<f64>| {
        let mut g: Vec<Vec<usize>> = f.clusters.iter().map(|c| { let mut m = c.members.clone(); m.sort(); m }).collect();
        g.sort();
        g
    };
    assert_eq!(groups(&a), groups(&b));
}

#[test]
fn nearest_core_assignment() {
    let f = clusters_with_cores(2, vec![vec![vec![0.0, 0.0]], vec![vec![4.0, 0.0]], vec![vec![0.0, 4.0], vec![9.0, 9.0]]]);
    assert_eq!(f.assign(&[9.0, 9.0]).unwrap(), 2);
    // equidistant between clusters 0 and 1
    assert_eq!(f.assign(&[2.0, 0.0]).unwrap(), 0);
    assert!(f.assign(&[1.0]).is_err());
    let mut r = rng(6);
    for _ in 0..1000 {
        let p = [r.random_range(-2.0..11.0), r.random_range(-2.0..11.0)];
        assert_eq!(f.assign(&p).unwrap(), nearest_core_oracle(&f, &p));
    }
}

#[test]
fn assignment_map_covers_only_mispredictions() {
    let f = clusters_with_cores(1, vec![vec![vec![0.0]], vec![vec![10.0]]]);
    let feats = Matrix::new(2, 1, vec![9.0, 1.0]).unwrap();
    assert_eq!(f.assignment_map(5, &[1, 3], &feats).unwrap(), vec![None, Some(1), None, Some(0), None]);
}

#[test]
fn fdr_examples() {
    let map = vec![None, Some(0), Some(2), Some(2), None];
    let all = FdrCounter::new(map.clone(), 3, false).unwrap();
    assert_eq!(all.fdr(&[0, 4]).unwrap(), 0.0);
    assert_close(all.fdr(&[1, 2, 3]).unwrap(), 2.0 / 3.0, 1e-15, "two of three");
    let detectable = FdrCounter::new(map, 3, true).unwrap();
    assert_eq!(detectable.denominator(), 2);
    assert_eq!(detectable.fdr(&[1, 2]).unwrap(), 1.0);
    assert!(FdrCounter::new(vec![None, None], 3, true).is_err());
}

#[test]
fn full_training_set_detects_every_cluster() {
    let rows = two_blobs(&mut rng(8), 25, 3);
    let ids: Vec<usize> = (0..50).map(|i| 2 * i).collect();
    let f = estimate_faults(&Matrix::from_rows(&rows).unwrap(), &ids, &blob_config()).unwrap();
    let counter = FdrCounter::new(f.training_map(100).unwrap(), f.len(), false).unwrap();
    assert_eq!(counter.fdr(&(0..100).collect::<Vec<_>>()).unwrap(), 1.0);
}

#[test]
fn silhouette_is_bitwise_stable_across_thread_counts() {
    let mut r = rng(10);
    let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![r.random_range(0.0..9.0), r.random_range(0.0..9.0)]).collect();
    let dist = DistanceMatrix::new(&Matrix::from_rows(&rows).unwrap());
    let labels = dbscan(&dist, 0.8, 3).labels;
    let with = |n: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        pool.install(|| silhouette(&dist, &labels)).unwrap().to_bits()
    };
    assert_eq!(with(1), with(7));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dbscan_silhouette_matches_oracle(seed in any::<u64>(), eps in 0.3f64..3.0, min_pts in 2usize..6) {
        let mut r = rng(seed);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![r.random_range(0.0..6.0), r.random_range(0.0..6.0)]).collect();
        let dist = DistanceMatrix::new(&Matrix::from_rows(&rows).unwrap());
        let labels = dbscan(&dist, eps, min_pts).labels;
        match (silhouette(&dist, &labels), silhouette_oracle(&rows, &labels)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
            (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
        }
    }

    #[test]
    fn fdr_bounded_and_monotone(seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = r.random_range(1..6);
        let map: Vec<Option<usize>> = (0..30).map(|_| r.random_bool(0.3).then(|| r.random_range(0..k))).collect();
        prop_assume!(map.iter().any(Option::is_some));
        let counter = FdrCounter::new(map.clone(), k, true).unwrap();
        let a = common::random_subset(&mut r, 30, 15);
        let b = common::random_subset(&mut r, 30, 15);
        let union: Vec<usize> = a.iter().chain(&b).copied().collect();
        let fa = counter.fdr(&a).unwrap();
        prop_assert!((0.0..=1.0).contains(&fa));
        prop_assert!(counter.fdr(&union).unwrap() >= fa);
        prop_assert!((fa - fdr_oracle(&map, &a, counter.denominator())).abs() < 1e-15);
    }
}
