//! Regression from adequacy score to fault detection rate: four model families,
//! K-fold cross-validation, selection, and prediction intervals.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Qr};
use crate::scalar::Scalar;
use crate::seed;

/// Regression families, declared from simplest to most flexible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Quadratic,
    Exponential,
    Tree,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Linear, Family::Quadratic, Family::Exponential, Family::Tree];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Quadratic => "quadratic",
            Family::Exponential => "exponential",
            Family::Tree => "tree",
        }
    }

    fn n_params(self) -> usize {
        match self {
            Family::Linear | Family::Exponential => 2,
            Family::Quadratic => 3,
            Family::Tree => 0,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Floor applied to targets before the log transform of the exponential family.
pub const EXP_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 5, min_leaf: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode<T = f64> {
    Leaf { value: T, n: usize },
    Split { threshold: T, left: Box<TreeNode<T>>, right: Box<TreeNode<T>> },
}

/// Binary CART regression tree on one input. Inputs `<= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree<T = f64> {
    pub root: TreeNode<T>,
}

impl<T: Scalar> RegressionTree<T> {
    /// Greedy variance-reduction splits at midpoints between distinct sorted inputs.
    pub fn fit(points: &[(T, T)], params: &TreeParams) -> Self {
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        Self { root: grow(&sorted, 0, params) }
    }

    pub fn predict(&self, x: T) -> T {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split { threshold, left, right } => node = if x <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn d<T>(n: &TreeNode<T>) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }

    /// Leaves in input order as `(lower threshold, upper threshold, value, n)`.
    pub fn leaves(&self) -> Vec<(Option<T>, Option<T>, T, usize)> {
        fn walk<T: Copy>(n: &TreeNode<T>, lo: Option<T>, hi: Option<T>, out: &mut Vec<(Option<T>, Option<T>, T, usize)>) {
            match n {
                TreeNode::Leaf { value, n } => out.push((lo, hi, *value, *n)),
                TreeNode::Split { threshold, left, right } => {
                    walk(left, lo, Some(*threshold), out);
                    walk(right, Some(*threshold), hi, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, None, None, &mut out);
        out
    }
}

fn grow<T: Scalar>(sorted: &[(T, T)], depth: usize, params: &TreeParams) -> TreeNode<T> {
    let n = sorted.len();
    let sum: T = sorted.iter().map(|p| p.1).sum();
    let leaf = TreeNode::Leaf { value: if n == 0 { T::zero() } else { sum / T::count(n) }, n };
    let min_leaf = params.min_leaf.max(1);
    if depth >= params.max_depth || n < 2 * min_leaf {
        return leaf;
    }
    let sum_sq: T = sorted.iter().map(|p| p.1 * p.1).sum();
    let sse = sum_sq - sum * sum / T::count(n);
    if sse <= T::zero() {
        return leaf;
    }
    // maximize S_L^2 / n_L + S_R^2 / n_R, equivalent to minimizing child SSE
    let base = sum * sum / T::count(n);
    let mut best: Option<(T, usize)> = None;
    let mut left_sum = T::zero();
    for i in 1..n {
        left_sum += sorted[i - 1].1;
        if i < min_leaf || n - i < min_leaf || sorted[i - 1].0 >= sorted[i].0 {
            continue;
        }
        let right_sum = sum - left_sum;
        let score = left_sum * left_sum / T::count(i) + right_sum * right_sum / T::count(n - i);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, i));
        }
    }
    match best {
        Some((score, i)) if score - base > sse * T::of(1e-12) => {
            let threshold = (sorted[i - 1].0 + sorted[i].0) / T::of(2.0);
            TreeNode::Split {
                threshold,
                left: Box::new(grow(&sorted[..i], depth + 1, params)),
                right: Box::new(grow(&sorted[i..], depth + 1, params)),
            }
        }
        _ => leaf,
    }
}

/// A fitted regression model. Serialized as `{"family": ..., "params": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum Fitted<T = f64> {
    /// `y = a + b x`
    Linear { a: T, b: T },
    /// `y = a + b x + c x^2`
    Quadratic { a: T, b: T, c: T },
    /// `y = a e^{b x}`
    Exponential { a: T, b: T },
    Tree(RegressionTree<T>),
}

impl<T: Scalar> Fitted<T> {
    pub fn family(&self) -> Family {
        match self {
            Fitted::Linear { .. } => Family::Linear,
            Fitted::Quadratic { .. } => Family::Quadratic,
            Fitted::Exponential { .. } => Family::Exponential,
            Fitted::Tree(_) => Family::Tree,
        }
    }

    /// Raw (unclamped) model value.
    pub fn predict(&self, x: T) -> T {
        match self {
            Fitted::Linear { a, b } => *a + *b * x,
            Fitted::Quadratic { a, b, c } => *a + *b * x + *c * x * x,
            Fitted::Exponential { a, b } => *a * (*b * x).exp(),
            Fitted::Tree(t) => t.predict(x),
        }
    }

    /// Model value clamped to the FDR domain.
    pub fn predict_clamped(&self, x: T) -> T {
        clamp01(self.predict(x))
    }
}

pub fn clamp01<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

fn design_row<T: Scalar>(family: Family, x: T) -> Vec<T> {
    match family {
        Family::Linear | Family::Exponential => vec![T::one(), x],
        Family::Quadratic => vec![T::one(), x, x * x],
        Family::Tree => unreachable!("trees have no design matrix"),
    }
}

fn design<T: Scalar>(family: Family, points: &[(T, T)]) -> Result<Matrix<T>> {
    let rows: Vec<Vec<T>> = points.iter().map(|p| design_row(family, p.0)).collect();
    Matrix::from_rows(&rows)
}

fn targets<T: Scalar>(family: Family, points: &[(T, T)]) -> Vec<T> {
    match family {
        Family::Exponential => points.iter().map(|p| p.1.max(T::of(EXP_FLOOR)).ln()).collect(),
        _ => points.iter().map(|p| p.1).collect(),
    }
}

fn min_points(family: Family, params: &TreeParams) -> usize {
    match family {
        Family::Linear | Family::Exponential => 3,
        Family::Quadratic => 4,
        Family::Tree => 2 * params.min_leaf.max(1),
    }
}

/// Fit one family by least squares (QR), log-linear least squares, or CART.
pub fn fit_regression<T: Scalar>(points: &[(T, T)], family: Family, params: &TreeParams) -> Result<Fitted<T>> {
    let need = min_points(family, params);
    if points.len() < need {
        return Err(Error::InsufficientPoints { need, have: points.len() });
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::NonFinite("regression points"));
    }
    if family == Family::Tree {
        return Ok(Fitted::Tree(RegressionTree::fit(points, params)));
    }
    let x0 = points[0].0;
    if points.iter().all(|p| p.0 == x0) {
        return Err(Error::DegenerateDesign("all inputs are equal".into()));
    }
    let mut qr = Qr::factor(&design(family, points)?)?;
    let beta = qr.solve(&targets(family, points));
    Ok(match family {
        Family::Linear => Fitted::Linear { a: beta[0], b: beta[1] },
        Family::Quadratic => Fitted::Quadratic { a: beta[0], b: beta[1], c: beta[2] },
        Family::Exponential => Fitted::Exponential { a: beta[0].exp(), b: beta[1] },
        Family::Tree => unreachable!(),
    })
}

/// Point-prediction quality. `through_origin_*` regress `y_true` on `y_pred`
/// with zero intercept; `linear_r2` is the squared Pearson correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreMetrics {
    #[serde(with = "crate::io::nan_null")]
    pub r2: f64,
    /// Mean of `|pred - true| / true` over samples with `true > 0`; NaN when none.
    #[serde(with = "crate::io::nan_null")]
    pub mmre: f64,
    pub rmse: f64,
    pub through_origin_slope: f64,
    #[serde(with = "crate::io::nan_null")]
    pub through_origin_r2: f64,
    #[serde(with = "crate::io::nan_null")]
    pub linear_r2: f64,
}

fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Option<f64> {
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let sst: f64 = y_true.iter().map(|y| (y - mean) * (y - mean)).sum();
    let sse: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum();
    if sst == 0.0 {
        None
    } else {
        Some(1.0 - sse / sst)
    }
}

fn mmre(y_true: &[f64], y_pred: &[f64]) -> Option<f64> {
    let rel: Vec<f64> = y_true.iter().zip(y_pred).filter(|(y, _)| **y > 0.0).map(|(y, p)| (p - y).abs() / y).collect();
    if rel.is_empty() {
        None
    } else {
        Some(rel.iter().sum::<f64>() / rel.len() as f64)
    }
}

fn rmse(y_true: &[f64], y_pred: &[f64]) -> f64 {
    let mse = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / y_true.len() as f64;
    mse.sqrt()
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

pub fn score_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<ScoreMetrics> {
    if y_true.is_empty() || y_true.len() != y_pred.len() {
        return Err(Error::InvalidArgument(format!(
            "score_metrics needs equal nonempty lengths, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let sxx: f64 = y_pred.iter().map(|p| p * p).sum();
    if sxx == 0.0 {
        return Err(Error::SlopeUndefined);
    }
    let sxy: f64 = y_pred.iter().zip(y_true).map(|(p, y)| p * y).sum();
    let slope = sxy / sxx;
    let syy: f64 = y_true.iter().map(|y| y * y).sum();
    let resid: f64 = y_pred.iter().zip(y_true).map(|(p, y)| (y - slope * p) * (y - slope * p)).sum();
    let sse: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(ScoreMetrics {
        r2: r2_score(y_true, y_pred).unwrap_or(if sse == 0.0 { 1.0 } else { f64::NAN }),
        mmre: mmre(y_true, y_pred).unwrap_or(f64::NAN),
        rmse: rmse(y_true, y_pred),
        through_origin_slope: slope,
        through_origin_r2: if syy == 0.0 { f64::NAN } else { 1.0 - resid / syy },
        linear_r2: pearson(y_pred, y_true).map_or(if sse == 0.0 { 1.0 } else { f64::NAN }, |r| r * r),
    })
}

/// Average ranks, 1-based; ties share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidArgument(format!("spearman needs equal lengths >= 3, got {} and {}", x.len(), y.len())));
    }
    pearson(&average_ranks(x), &average_ranks(y)).ok_or(Error::ZeroRankVariance)
}

/// Shuffled K-fold partition; the first `n % k` folds hold one extra sample.
pub fn fold_partition(n: usize, k: usize, seed_value: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::InsufficientPoints { need: k.max(2), have: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::stream_rng(seed_value, "cv.shuffle", 0));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCv {
    pub family: Family,
    #[serde(with = "crate::io::nan_null")]
    pub mean_r2: f64,
    #[serde(with = "crate::io::nan_null")]
    pub mean_mmre: f64,
    #[serde(with = "crate::io::nan_null")]
    pub mean_rmse: f64,
    /// Folds whose held-out targets had zero variance; their R² is skipped.
    pub skipped_r2_folds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub n: usize,
    pub families: Vec<FamilyCv>,
}

impl CvReport {
    pub fn get(&self, family: Family) -> Option<&FamilyCv> {
        self.families.iter().find(|f| f.family == family)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("family,mean_r2,mean_mmre,mean_rmse,skipped_r2_folds,error\n");
        for f in &self.families {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                f.family,
                crate::io::fmt_f64(f.mean_r2),
                crate::io::fmt_f64(f.mean_mmre),
                crate::io::fmt_f64(f.mean_rmse),
                f.skipped_r2_folds,
                f.error.as_deref().unwrap_or("")
            ));
        }
        s
    }
}

/// Metrics of one family on one held-out fold, using clamped predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldScore {
    pub r2: Option<f64>,
    pub mmre: Option<f64>,
    pub rmse: f64,
}

pub fn score_fold<T: Scalar>(train: &[(T, T)], test: &[(T, T)], family: Family, params: &TreeParams) -> Result<FoldScore> {
    let model = fit_regression(train, family, params)?;
    let y: Vec<f64> = test.iter().map(|p| p.1.as_f64()).collect();
    let pred: Vec<f64> = test.iter().map(|p| model.predict_clamped(p.0).as_f64()).collect();
    Ok(FoldScore { r2: r2_score(&y, &pred), mmre: mmre(&y, &pred), rmse: rmse(&y, &pred) })
}

fn mean_of(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn cross_validate<T: Scalar>(
    points: &[(T, T)],
    families: &[Family],
    k: usize,
    seed_value: u64,
    params: &TreeParams,
) -> Result<CvReport> {
    let folds = fold_partition(points.len(), k, seed_value)?;
    let splits: Vec<(Vec<(T, T)>, Vec<(T, T)>)> = (0..k)
        .map(|f| {
            let test = folds[f].iter().map(|&i| points[i]).collect();
            let train = folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, idx)| idx.iter().map(|&i| points[i])).collect();
            (train, test)
        })
        .collect();
    let families = families
        .iter()
        .map(|&family| {
            let scores: Vec<Result<FoldScore>> =
                splits.par_iter().map(|(train, test)| score_fold(train, test, family, params)).collect();
            let mut ok = Vec::with_capacity(k);
            for s in scores {
                match s {
                    Ok(s) => ok.push(s),
                    Err(e) => {
                        return FamilyCv {
                            family,
                            mean_r2: f64::NAN,
                            mean_mmre: f64::NAN,
                            mean_rmse: f64::NAN,
                            skipped_r2_folds: 0,
                            error: Some(e.to_string()),
                        }
                    }
                }
            }
            let r2: Vec<f64> = ok.iter().filter_map(|s| s.r2).collect();
            let mm: Vec<f64> = ok.iter().filter_map(|s| s.mmre).collect();
            let rm: Vec<f64> = ok.iter().map(|s| s.rmse).collect();
            FamilyCv {
                family,
                mean_r2: mean_of(&r2),
                mean_mmre: mean_of(&mm),
                mean_rmse: mean_of(&rm),
                skipped_r2_folds: ok.len() - r2.len(),
                error: None,
            }
        })
        .collect();
    Ok(CvReport { k, n: points.len(), families })
}

/// Family with the highest mean cross-validated R²; ties go to the simpler family.
pub fn select_best(report: &CvReport) -> Result<Family> {
    let mut best: Option<(f64, Family)> = None;
    for f in &report.families {
        if !f.mean_r2.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((r2, fam)) => f.mean_r2 > r2 || (f.mean_r2 == r2 && f.family < fam),
        };
        if better {
            best = Some((f.mean_r2, f.family));
        }
    }
    best.map(|(_, f)| f)
        .ok_or_else(|| Error::InvalidArgument("no regression family produced a finite cross-validated R²".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    ParametricT,
    BootstrapPercentile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub method: IntervalMethod,
}

/// Residual statistics of a least-squares fit, enough to form t intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub dof: usize,
    pub sigma2: f64,
    /// `(X^T X)^{-1}` of the design.
    pub gram_inverse: Vec<Vec<f64>>,
    /// Intervals are formed on `ln y` and exponentiated.
    pub log_space: bool,
}

impl ResidualStats {
    pub fn compute<T: Scalar>(fitted: &Fitted<T>, points: &[(T, T)]) -> Result<Self> {
        let family = fitted.family();
        if family == Family::Tree {
            return Err(Error::InvalidArgument("trees use bootstrap intervals".into()));
        }
        let p = family.n_params();
        if points.len() <= p {
            return Err(Error::InsufficientPoints { need: p + 1, have: points.len() });
        }
        let qr = Qr::factor(&design(family, points)?)?;
        let ys = targets(family, points);
        let log_space = family == Family::Exponential;
        let sse: f64 = points
            .iter()
            .zip(&ys)
            .map(|(pt, &y)| {
                let fit = if log_space { fitted.predict(pt.0).ln() } else { fitted.predict(pt.0) };
                let r = (y - fit).as_f64();
                r * r
            })
            .sum();
        let dof = points.len() - p;
        let g = qr.gram_inverse();
        Ok(Self {
            dof,
            sigma2: sse / dof as f64,
            gram_inverse: (0..p).map(|i| (0..p).map(|j| g[(i, j)].as_f64()).collect()).collect(),
            log_space,
        })
    }

    /// Standard error of a new observation at design row `phi`.
    pub fn prediction_se(&self, phi: &[f64]) -> f64 {
        let mut q = 0.0;
        for (i, gi) in self.gram_inverse.iter().enumerate() {
            for (j, g) in gi.iter().enumerate() {
                q += phi[i] * g * phi[j];
            }
        }
        (self.sigma2 * (1.0 + q)).sqrt()
    }
}

pub fn t_quantile(p: f64, dof: usize) -> Result<f64> {
    let t = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(t.inverse_cdf(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: 1000, seed: 0 }
    }
}

/// Trees refitted on seeded bootstrap resamples of the training points.
#[derive(Debug, Clone)]
pub struct BootstrapEnsemble<T> {
    pub trees: Vec<RegressionTree<T>>,
}

impl<T: Scalar> BootstrapEnsemble<T> {
    pub fn fit(points: &[(T, T)], params: &TreeParams, config: &BootstrapConfig) -> Result<Self> {
        if points.is_empty() || config.resamples == 0 {
            return Err(Error::InvalidArgument("bootstrap needs points and at least one resample".into()));
        }
        let n = points.len();
        let trees = (0..config.resamples)
            .into_par_iter()
            .map(|b| {
                let mut rng = seed::stream_rng(config.seed, "bootstrap", b as u64);
                let sample: Vec<(T, T)> = (0..n).map(|_| points[rng.random_range(0..n)]).collect();
                RegressionTree::fit(&sample, params)
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn predictions(&self, x: T) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x).as_f64()).collect()
    }
}

/// Linear-interpolation percentile of a sample (`q` in `[0, 1]`).
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

/// Interval machinery prepared once for a fitted model.
#[derive(Debug, Clone)]
pub enum IntervalEngine<T> {
    Parametric(ResidualStats),
    Bootstrap(BootstrapEnsemble<T>),
}

impl<T: Scalar> IntervalEngine<T> {
    pub fn prepare(fitted: &Fitted<T>, points: &[(T, T)], params: &TreeParams, bootstrap: &BootstrapConfig) -> Result<Self> {
        Ok(match fitted {
            Fitted::Tree(_) => IntervalEngine::Bootstrap(BootstrapEnsemble::fit(points, params, bootstrap)?),
            _ => IntervalEngine::Parametric(ResidualStats::compute(fitted, points)?),
        })
    }

    pub fn interval(&self, fitted: &Fitted<T>, x: T, level: f64) -> Result<PredictionInterval> {
        let xf = x.as_f64();
        if !(0.0..=1.0).contains(&xf) {
            return Err(Error::OutOfDomain(xf));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidArgument(format!("interval level must be in (0, 1), got {level}")));
        }
        let center = fitted.predict(x).as_f64();
        let alpha = 1.0 - level;
        let (low, high, method) = match self {
            IntervalEngine::Parametric(stats) => {
                let phi: Vec<f64> = design_row(fitted.family(), xf);
                let margin = t_quantile(1.0 - alpha / 2.0, stats.dof)? * stats.prediction_se(&phi);
                if stats.log_space {
                    let lc = center.ln();
                    ((lc - margin).exp(), (lc + margin).exp(), IntervalMethod::ParametricT)
                } else {
                    (center - margin, center + margin, IntervalMethod::ParametricT)
                }
            }
            IntervalEngine::Bootstrap(ensemble) => {
                let mut preds = ensemble.predictions(x);
                let lo = percentile(&mut preds, alpha / 2.0);
                let hi = percentile(&mut preds, 1.0 - alpha / 2.0);
                (lo, hi, IntervalMethod::BootstrapPercentile)
            }
        };
        Ok(PredictionInterval { center: clamp01(center), low: clamp01(low), high: clamp01(high), level, method })
    }
}

/// One-shot interval at `x`; prefer [`IntervalEngine`] when predicting many points.
pub fn predict_with_interval<T: Scalar>(
    fitted: &Fitted<T>,
    x: T,
    points: &[(T, T)],
    level: f64,
    params: &TreeParams,
    bootstrap: &BootstrapConfig,
) -> Result<PredictionInterval> {
    let xf = x.as_f64();
    if !(0.0..=1.0).contains(&xf) {
        return Err(Error::OutOfDomain(xf));
    }
    IntervalEngine::prepare(fitted, points, params, bootstrap)?.interval(fitted, x, level)
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: TreeParams = TreeParams { max_depth: 5, min_leaf: 5 };

    #[test]
    fn exact_linear_fit() {
        let pts: [(f64, f64); 3] = [(0.0, 0.0), (1.0, 2.0), (2.0, 4.0)];
        match fit_regression(&pts, Family::Linear, &P).unwrap() {
            Fitted::Linear { a, b } => {
                assert!(a.abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flat_tree_is_single_leaf() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 / 20.0, 0.7)).collect();
        let t = fit_regression(&pts, Family::Tree, &P).unwrap();
        let Fitted::Tree(tree) = &t else { panic!() };
        assert_eq!(tree.depth(), 0);
        assert!((t.predict(0.33) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn tree_respects_depth_and_leaf_size() {
        let pts: Vec<(f64, f64)> = (0..200).map(|i| ((i as f64 * 0.618).fract(), (i as f64 * 0.377).sin())).collect();
        let Fitted::Tree(tree) = fit_regression(&pts, Family::Tree, &P).unwrap() else { panic!() };
        assert!(tree.depth() <= 5);
        assert!(tree.leaves().iter().all(|l| l.3 >= 5));
    }

    #[test]
    fn degenerate_designs() {
        let pts = [(0.5, 0.1), (0.5, 0.2), (0.5, 0.3), (0.5, 0.4)];
        for f in [Family::Linear, Family::Quadratic, Family::Exponential] {
            assert!(matches!(fit_regression(&pts, f, &P), Err(Error::DegenerateDesign(_))));
        }
        assert!(matches!(fit_regression(&pts[..2], Family::Linear, &P), Err(Error::InsufficientPoints { .. })));
        assert!(matches!(fit_regression(&pts[..3], Family::Quadratic, &P), Err(Error::InsufficientPoints { .. })));
    }

    #[test]
    fn exponential_fit_recovers_parameters() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 / 10.0, 0.1 * (2.0 * i as f64 / 10.0).exp())).collect();
        let Fitted::Exponential { a, b } = fit_regression(&pts, Family::Exponential, &P).unwrap() else { panic!() };
        assert!((a - 0.1).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fold_sizes_are_balanced() {
        let folds = fold_partition(103, 5, 1).unwrap();
        assert_eq!(folds.iter().map(Vec::len).collect::<Vec<_>>(), vec![21, 21, 21, 20, 20]);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert!(fold_partition(4, 5, 1).is_err());
    }

    #[test]
    fn noiseless_linear_cv() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 / 50.0, 0.1 + 0.8 * i as f64 / 50.0)).collect();
        let r = cross_validate(&pts, &[Family::Linear], 5, 3, &P).unwrap();
        let lin = r.get(Family::Linear).unwrap();
        assert!((lin.mean_r2 - 1.0).abs() < 1e-12);
        assert!(lin.mean_rmse < 1e-12);
    }

    fn report(r2: &[(Family, f64)]) -> CvReport {
        CvReport {
            k: 5,
            n: 10,
            families: r2
                .iter()
                .map(|&(family, mean_r2)| FamilyCv {
                    family,
                    mean_r2,
                    mean_mmre: 0.0,
                    mean_rmse: 0.0,
                    skipped_r2_folds: 0,
                    error: None,
                })
                .collect(),
        }
    }

    #[test]
    fn selection_rules() {
        assert_eq!(select_best(&report(&[(Family::Linear, 0.91), (Family::Tree, 0.99)])).unwrap(), Family::Tree);
        assert_eq!(select_best(&report(&[(Family::Quadratic, 0.95), (Family::Linear, 0.95)])).unwrap(), Family::Linear);
        assert_eq!(select_best(&report(&[(Family::Exponential, 0.2)])).unwrap(), Family::Exponential);
        assert_eq!(select_best(&report(&[(Family::Tree, f64::NAN), (Family::Linear, -0.5)])).unwrap(), Family::Linear);
    }

    #[test]
    fn noiseless_interval_has_zero_width() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 / 20.0, 0.2 + 0.5 * i as f64 / 20.0)).collect();
        let f = fit_regression(&pts, Family::Linear, &P).unwrap();
        let pi = predict_with_interval(&f, 0.4, &pts, 0.95, &P, &BootstrapConfig::default()).unwrap();
        assert!((pi.high - pi.low).abs() < 1e-9);
        assert!((pi.center - 0.4).abs() < 1e-12);
        assert!(matches!(
            predict_with_interval(&f, 1.5, &pts, 0.95, &P, &BootstrapConfig::default()),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn negative_center_is_clamped() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 / 10.0, 0.5 - i as f64 / 10.0 + 0.01 * (i % 3) as f64)).collect();
        let f = Fitted::Linear { a: -0.1, b: 0.0 };
        let pi = predict_with_interval(&f, 0.0, &pts, 0.95, &P, &BootstrapConfig::default()).unwrap();
        assert_eq!(pi.center, 0.0);
        assert!(pi.low <= pi.high && pi.low >= 0.0);
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 10.0, 11.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(matches!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ZeroRankVariance)));
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn score_metric_identities() {
        let y = [0.1, 0.4, 0.6, 0.9];
        let m = score_metrics(&y, &y).unwrap();
        assert_eq!((m.through_origin_slope, m.r2, m.rmse), (1.0, 1.0, 0.0));
        let doubled: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        assert!((score_metrics(&y, &doubled).unwrap().through_origin_slope - 0.5).abs() < 1e-15);
        assert!(matches!(score_metrics(&y, &[0.0; 4]), Err(Error::SlopeUndefined)));
        let m = score_metrics(&[0.0, 0.5], &[0.1, 0.25]).unwrap();
        assert_eq!(m.mmre, 0.5);
    }

    #[test]
    fn percentile_interpolates() {
        let mut v: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(percentile(&mut v, 0.025), 2.5);
        assert_eq!(percentile(&mut v, 0.975), 97.5);
    }
}
