//! Fault estimation: mispredicted inputs are projected onto their principal
//! components and grouped by density clustering. Each cluster stands for one
//! fault; the fault detection rate of a subset is the fraction of clusters it
//! hits.

use std::collections::BTreeSet;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CellDiagnostic, Error, Result};
use crate::linalg::{distance, squared_distance, symmetric_eigen, Matrix};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub pca_dims: usize,
    /// Absolute eps values. When empty, `eps_factors` scale the median pairwise
    /// distance of a sample of the reduced points.
    pub eps_grid: Vec<f64>,
    pub eps_factors: Vec<f64>,
    pub min_pts_grid: Vec<usize>,
    pub median_sample: usize,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            pca_dims: 10,
            eps_grid: Vec::new(),
            eps_factors: vec![0.25, 0.5, 1.0, 2.0],
            min_pts_grid: vec![5, 10, 15],
            median_sample: 500,
            seed: 0,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pca_dims < 2 {
            return Err(Error::InvalidArgument(format!("pca_dims must be >= 2, got {}", self.pca_dims)));
        }
        if self.min_pts_grid.is_empty() || self.min_pts_grid.contains(&0) {
            return Err(Error::InvalidArgument("min_pts_grid must be nonempty and positive".into()));
        }
        if self.eps_grid.is_empty() && self.eps_factors.is_empty() {
            return Err(Error::InvalidArgument("eps grid is empty".into()));
        }
        Ok(())
    }
}

/// Linear projection onto the leading principal components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reducer<T = f64> {
    pub mean: Vec<T>,
    /// One row per component, each of input width.
    pub components: Vec<Vec<T>>,
}

impl<T: Scalar> Reducer<T> {
    pub fn fit(data: &Matrix<T>, dims: usize) -> Result<Self> {
        let (n, d) = (data.rows(), data.cols());
        if n == 0 || d == 0 {
            return Err(Error::EmptyDataset("feature matrix"));
        }
        let mean: Vec<T> = (0..d).map(|j| data.column(j).into_iter().sum::<T>() / T::count(n)).collect();
        let mut cov = Matrix::zeros(d, d);
        for r in data.iter_rows() {
            for i in 0..d {
                let ci = r[i] - mean[i];
                for j in i..d {
                    cov[(i, j)] += ci * (r[j] - mean[j]);
                }
            }
        }
        let denom = T::count(n.max(2) - 1);
        for i in 0..d {
            for j in i..d {
                let v = cov[(i, j)] / denom;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let (_, vectors) = symmetric_eigen(&cov)?;
        let k = dims.min(d);
        Ok(Self { mean, components: (0..k).map(|i| vectors.row(i).to_vec()).collect() })
    }

    pub fn input_width(&self) -> usize {
        self.mean.len()
    }

    pub fn output_width(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape(format!("feature width {} != reducer width {}", x.len(), self.mean.len())));
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).fold(T::zero(), |acc, ((&w, &v), &m)| acc + w * (v - m)))
            .collect())
    }

    pub fn project_all(&self, data: &Matrix<T>) -> Result<Matrix<T>> {
        let rows = data.iter_rows().map(|r| self.project(r)).collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, self.output_width()));
        }
        Matrix::from_rows(&rows)
    }
}

/// Symmetric pairwise Euclidean distances, row-major `n x n`.
pub struct DistanceMatrix<T> {
    n: usize,
    d: Vec<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    pub fn new(points: &Matrix<T>) -> Self {
        let n = points.rows();
        let d: Vec<T> = (0..n * n).into_par_iter().map(|k| distance(points.row(k / n), points.row(k % n))).collect();
        Self { n, d }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.d[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Density clustering labels: `None` marks noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityLabels {
    pub labels: Vec<Option<usize>>,
    pub core: Vec<bool>,
    pub n_clusters: usize,
}

/// DBSCAN over a precomputed distance matrix. A point is core when at least
/// `min_pts` points (itself included) lie within `eps`. Points are visited in
/// index order; border points join the first cluster that reaches them.
pub fn dbscan<T: Scalar>(dist: &DistanceMatrix<T>, eps: T, min_pts: usize) -> DensityLabels {
    let n = dist.len();
    let neighbours: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| dist.get(i, j) <= eps).collect()).collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut labels = vec![None; n];
    let mut n_clusters = 0;
    for start in 0..n {
        if !core[start] || labels[start].is_some() {
            continue;
        }
        let id = n_clusters;
        n_clusters += 1;
        labels[start] = Some(id);
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            for &q in &neighbours[p] {
                if labels[q].is_none() {
                    labels[q] = Some(id);
                    if core[q] {
                        stack.push(q);
                    }
                }
            }
        }
    }
    DensityLabels { labels, core, n_clusters }
}

/// Mean silhouette over the non-noise points. `None` with fewer than two clusters.
pub fn silhouette<T: Scalar>(dist: &DistanceMatrix<T>, labels: &[Option<usize>]) -> Option<f64> {
    let k = labels.iter().flatten().copied().max().map_or(0, |m| m + 1);
    let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    let mut sizes = vec![0usize; k];
    for &i in &members {
        sizes[labels[i].unwrap()] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return None;
    }
    // collected first so the sum order does not depend on the thread count
    let per_point: Vec<f64> = members
        .par_iter()
        .map(|&i| {
            let own = labels[i].unwrap();
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0f64; k];
            for &j in &members {
                if j != i {
                    sums[labels[j].unwrap()] += dist.get(i, j).as_f64();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    Some(per_point.iter().sum::<f64>() / members.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultCluster<T = f64> {
    pub id: usize,
    /// Dataset input indices of the member mispredictions.
    pub members: Vec<usize>,
    /// Reduced-space coordinates of the density-core members.
    pub core_points: Vec<Vec<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub eps: f64,
    pub min_pts: usize,
    pub noise: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultClusters<T = f64> {
    pub reducer: Reducer<T>,
    pub clusters: Vec<FaultCluster<T>>,
    pub silhouette: f64,
    pub selected: Selection,
    pub config: ClusteringConfig,
}

fn median_pairwise<T: Scalar>(points: &Matrix<T>, sample: usize, seed_value: u64) -> f64 {
    let n = points.rows();
    let idx: Vec<usize> = if n <= sample {
        (0..n).collect()
    } else {
        let mut rng = seed::stream_rng(seed_value, "faults.median", 0);
        let mut v = index::sample(&mut rng, n, sample).into_vec();
        v.sort_unstable();
        v
    };
    let mut d = Vec::with_capacity(idx.len() * idx.len().saturating_sub(1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            d.push(distance(points.row(i), points.row(j)).as_f64());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

struct Cell {
    eps: f64,
    min_pts: usize,
    labels: DensityLabels,
    silhouette: Option<f64>,
}

/// Cluster mispredicted inputs. `ids[i]` is the dataset index of feature row `i`.
pub fn estimate_faults<T: Scalar>(features: &Matrix<T>, ids: &[usize], config: &ClusteringConfig) -> Result<FaultClusters<T>> {
    config.validate()?;
    if ids.len() != features.rows() {
        return Err(Error::Shape(format!("{} ids for {} feature rows", ids.len(), features.rows())));
    }
    let need = config.min_pts_grid.iter().copied().max().unwrap_or(1);
    if features.rows() < need {
        return Err(Error::InsufficientPoints { need, have: features.rows() });
    }
    let reducer = Reducer::fit(features, config.pca_dims)?;
    let reduced = reducer.project_all(features)?;
    let dist = DistanceMatrix::new(&reduced);
    let eps_grid: Vec<f64> = if config.eps_grid.is_empty() {
        let med = median_pairwise(&reduced, config.median_sample, config.seed);
        config.eps_factors.iter().map(|f| f * med).collect()
    } else {
        config.eps_grid.clone()
    };
    let grid: Vec<(f64, usize)> =
        eps_grid.iter().flat_map(|&e| config.min_pts_grid.iter().map(move |&m| (e, m))).collect();
    let cells: Vec<Cell> = grid
        .par_iter()
        .map(|&(eps, min_pts)| {
            let labels = dbscan(&dist, T::of(eps), min_pts);
            let silhouette = if labels.n_clusters >= 2 { silhouette(&dist, &labels.labels) } else { None };
            Cell { eps, min_pts, labels, silhouette }
        })
        .collect();
    let mut best: Option<&Cell> = None;
    for cell in &cells {
        if let Some(s) = cell.silhouette {
            if best.is_none_or(|b| s > b.silhouette.unwrap()) {
                best = Some(cell);
            }
        }
    }
    let Some(best) = best else {
        return Err(Error::Clustering(
            cells
                .iter()
                .map(|c| CellDiagnostic {
                    eps: c.eps,
                    min_pts: c.min_pts,
                    clusters: c.labels.n_clusters,
                    noise: c.labels.labels.iter().filter(|l| l.is_none()).count(),
                })
                .collect(),
        ));
    };
    let mut clusters: Vec<FaultCluster<T>> =
        (0..best.labels.n_clusters).map(|id| FaultCluster { id, members: Vec::new(), core_points: Vec::new() }).collect();
    for (row, label) in best.labels.labels.iter().enumerate() {
        if let Some(c) = label {
            clusters[*c].members.push(ids[row]);
            if best.labels.core[row] {
                clusters[*c].core_points.push(reduced.row(row).to_vec());
            }
        }
    }
    Ok(FaultClusters {
        reducer,
        clusters,
        silhouette: best.silhouette.unwrap(),
        selected: Selection {
            eps: best.eps,
            min_pts: best.min_pts,
            noise: best.labels.labels.iter().filter(|l| l.is_none()).count(),
        },
        config: config.clone(),
    })
}

impl<T: Scalar> FaultClusters<T> {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Cluster owning the core point nearest to the projected feature. Ties go
    /// to the lowest cluster id.
    pub fn assign(&self, feature: &[T]) -> Result<usize> {
        if self.clusters.is_empty() {
            return Err(Error::InvalidArgument("no fault clusters".into()));
        }
        let p = self.reducer.project(feature)?;
        let mut best: Option<(T, usize)> = None;
        for c in &self.clusters {
            for core in &c.core_points {
                let d = squared_distance(&p, core);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c.id));
                }
            }
        }
        best.map(|(_, id)| id).ok_or_else(|| Error::InvalidArgument("fault clusters have no core points".into()))
    }

    /// Cluster of every training input (`None` for correct and noise inputs).
    pub fn training_map(&self, n_inputs: usize) -> Result<Vec<Option<usize>>> {
        let mut map = vec![None; n_inputs];
        for c in &self.clusters {
            for &m in &c.members {
                if m >= n_inputs {
                    return Err(Error::IndexOutOfBounds { index: m, len: n_inputs });
                }
                map[m] = Some(c.id);
            }
        }
        Ok(map)
    }

    /// Assign every mispredicted input of a pool. `features` rows align with `mispredicted`.
    pub fn assignment_map(&self, n_inputs: usize, mispredicted: &[usize], features: &Matrix<T>) -> Result<Vec<Option<usize>>> {
        if features.rows() != mispredicted.len() {
            return Err(Error::Shape(format!("{} feature rows for {} mispredicted inputs", features.rows(), mispredicted.len())));
        }
        let ids: Vec<usize> = (0..mispredicted.len())
            .into_par_iter()
            .map(|r| self.assign(features.row(r)))
            .collect::<Result<_>>()?;
        let mut map = vec![None; n_inputs];
        for (&t, id) in mispredicted.iter().zip(ids) {
            if t >= n_inputs {
                return Err(Error::IndexOutOfBounds { index: t, len: n_inputs });
            }
            map[t] = Some(id);
        }
        Ok(map)
    }
}

/// Fault detection rate over one input pool.
#[derive(Debug, Clone, PartialEq)]
pub struct FdrCounter {
    map: Vec<Option<usize>>,
    n_clusters: usize,
    denominator: usize,
}

impl FdrCounter {
    /// With `detectable_only` the denominator is the number of clusters hit by
    /// at least one input of the pool; otherwise it is every cluster.
    pub fn new(map: Vec<Option<usize>>, n_clusters: usize, detectable_only: bool) -> Result<Self> {
        if let Some(&bad) = map.iter().flatten().find(|&&c| c >= n_clusters) {
            return Err(Error::InvalidArgument(format!("cluster id {bad} out of range ({n_clusters} clusters)")));
        }
        let denominator = if detectable_only {
            map.iter().flatten().collect::<BTreeSet<_>>().len()
        } else {
            n_clusters
        };
        if denominator == 0 {
            return Err(if detectable_only {
                Error::NoDetectableClusters
            } else {
                Error::InvalidArgument("no fault clusters".into())
            });
        }
        Ok(Self { map, n_clusters, denominator })
    }

    pub fn pool_size(&self) -> usize {
        self.map.len()
    }

    pub fn denominator(&self) -> usize {
        self.denominator
    }

    pub fn map(&self) -> &[Option<usize>] {
        &self.map
    }

    pub fn fdr(&self, indices: &[usize]) -> Result<f64> {
        crate::adequacy::check_indices(indices, self.map.len())?;
        let mut hit = vec![false; self.n_clusters];
        for &t in indices {
            if let Some(c) = self.map[t] {
                hit[c] = true;
            }
        }
        Ok(hit.iter().filter(|&&h| h).count() as f64 / self.denominator as f64)
    }
}
