//! Dense row-major matrices and the handful of factorizations the crate needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Build from row vectors. An empty list yields a `0 x 0` matrix.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.iter_rows().map(<[T]>::to_vec).collect()
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::IndexOutOfBounds { index: i, len: self.rows });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self { rows: indices.len(), cols: self.cols, data })
    }

    /// `self * v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        self.iter_rows().map(|r| dot(r, v)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Drop columns, keeping those whose index is listed in `keep`.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * keep.len());
        for r in self.iter_rows() {
            data.extend(keep.iter().map(|&j| r[j]));
        }
        Self { rows: self.rows, cols: keep.len(), data }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

#[inline]
pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    squared_distance(a, b).sqrt()
}

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::count(xs.len())
}

/// Population variance (divides by `n`).
pub fn variance<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::count(xs.len())
}

/// Householder QR of an `n x p` design matrix with `n >= p`.
///
/// Used for ordinary least squares; `r` is kept so prediction-interval leverage
/// terms can be computed later without refactoring.
#[derive(Debug, Clone)]
pub struct Qr<T> {
    /// Upper-triangular `p x p` factor.
    pub r: Matrix<T>,
    /// `Q^T y` restricted to the first `p` entries, filled in by [`Qr::solve`].
    qty: Vec<T>,
    reflectors: Vec<Vec<T>>,
    n: usize,
}

impl<T: Scalar> Qr<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        let (n, p) = (a.rows(), a.cols());
        if n < p {
            return Err(Error::DegenerateDesign(format!("{n} rows for {p} coefficients")));
        }
        let mut w = a.clone();
        let mut reflectors = Vec::with_capacity(p);
        let scale = a.as_slice().iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::one());
        for k in 0..p {
            let mut v: Vec<T> = (k..n).map(|i| w[(i, k)]).collect();
            let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm <= T::epsilon() * scale * T::count(n) {
                return Err(Error::DegenerateDesign(format!("column {k} is linearly dependent")));
            }
            let alpha = if v[0] > T::zero() { -norm } else { norm };
            v[0] -= alpha;
            let vnorm2 = v.iter().map(|&x| x * x).sum::<T>();
            for j in k..p {
                let s = (k..n).map(|i| v[i - k] * w[(i, j)]).sum::<T>();
                let f = (s + s) / vnorm2;
                for i in k..n {
                    w[(i, j)] -= f * v[i - k];
                }
            }
            reflectors.push(v);
        }
        let mut r = Matrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                r[(i, j)] = w[(i, j)];
            }
        }
        // relative rank check on the diagonal
        let dmax = (0..p).fold(T::zero(), |m, i| m.max(r[(i, i)].abs()));
        for i in 0..p {
            if r[(i, i)].abs() <= dmax * T::of(1e-10) {
                return Err(Error::DegenerateDesign(format!("column {i} is linearly dependent")));
            }
        }
        Ok(Self { r, qty: Vec::new(), reflectors, n })
    }

    /// Least-squares solution of `A x = y`.
    pub fn solve(&mut self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.n);
        let mut b = y.to_vec();
        for (k, v) in self.reflectors.iter().enumerate() {
            let vnorm2 = v.iter().map(|&x| x * x).sum::<T>();
            let s = (k..self.n).map(|i| v[i - k] * b[i]).sum::<T>();
            let f = (s + s) / vnorm2;
            for i in k..self.n {
                b[i] -= f * v[i - k];
            }
        }
        let p = self.r.rows();
        self.qty = b[..p].to_vec();
        back_substitute(&self.r, &self.qty)
    }

    /// `(A^T A)^{-1} = R^{-1} R^{-T}`.
    pub fn gram_inverse(&self) -> Matrix<T> {
        let p = self.r.rows();
        let mut rinv = Matrix::zeros(p, p);
        for j in 0..p {
            let mut e = vec![T::zero(); p];
            e[j] = T::one();
            let col = back_substitute(&self.r, &e);
            for i in 0..p {
                rinv[(i, j)] = col[i];
            }
        }
        let mut g = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                g[(i, j)] = (0..p).map(|k| rinv[(i, k)] * rinv[(j, k)]).sum::<T>();
            }
        }
        g
    }
}

fn back_substitute<T: Scalar>(r: &Matrix<T>, b: &[T]) -> Vec<T> {
    let p = r.rows();
    let mut x = vec![T::zero(); p];
    for i in (0..p).rev() {
        let s = ((i + 1)..p).map(|j| r[(i, j)] * x[j]).sum::<T>();
        x[i] = (b[i] - s) / r[(i, i)];
    }
    x
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit eigenvectors
/// as rows. Each eigenvector's largest-magnitude component is made positive so
/// the result is reproducible.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>)> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::Shape(format!("eigen-decomposition needs a square matrix, got {}x{}", n, a.cols())));
    }
    let mut m = a.clone();
    let mut v = Matrix::<T>::identity(n);
    let total = a.as_slice().iter().map(|&x| x * x).sum::<T>();
    let tol = T::epsilon() * T::epsilon() * total.max(T::min_positive_value());
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        let mut col: Vec<T> = (0..n).map(|k| v[(k, i)]).collect();
        let pivot = col.iter().copied().fold(T::zero(), |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < T::zero() {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        vectors.row_mut(r).copy_from_slice(&col);
    }
    Ok((values, vectors))
}
