//! Small dense linear algebra: row-major matrices, envelope Cholesky,
//! symmetric eigensolvers and the generalized problem `H x = lambda G x`.
//!
//! Two symmetric eigensolvers are provided. Cyclic Jacobi is simple and very
//! accurate and is used for small problems. Householder tridiagonalization
//! followed by implicit QL (after the EISPACK routines tred2/tql2) handles the
//! dense iterate problems, which reach a few thousand unknowns.

use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::prelude::*;

/// Matrices up to this size go to the Jacobi solver.
pub const JACOBI_MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_rows: wrong data length");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self^T x`
    pub fn tmatvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a != 0.0 {
                    let (src, dst) = (other.row(k), &mut out.data[i * other.cols..(i + 1) * other.cols]);
                    axpy(a, src, dst);
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest entry of `|A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in 0..i {
                let m = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Lower Cholesky factor that skips the leading zeros of every row.
///
/// Gram matrices of open curves are banded; periodic ones add a few dense
/// trailing rows from the wrap-around coupling. Tracking the first nonzero
/// column per row keeps both cases close to banded cost.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Mat,
    first: Vec<usize>,
}

impl Cholesky {
    pub fn new(a: &Mat) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension(format!("Cholesky of {}x{}", n, a.cols())));
        }
        let first: Vec<usize> = (0..n)
            .map(|i| (0..=i).find(|&j| a[(i, j)] != 0.0).unwrap_or(i))
            .collect();
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let lo = fi.max(first[j]);
                let s = {
                    let (ri, rj) = (l.row(i), l.row(j));
                    dot(&ri[lo..j], &rj[lo..j])
                };
                let v = a[(i, j)] - s;
                if j == i {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::CholeskyFailure { pivot: i });
                    }
                    l[(i, i)] = v.sqrt();
                } else {
                    l[(i, j)] = v / l[(j, j)];
                }
            }
        }
        Ok(Cholesky { l, first })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor(&self) -> &Mat {
        &self.l
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        for i in 0..self.dim() {
            let fi = self.first[i];
            let s = dot(&self.l.row(i)[fi..i], &b[fi..i]);
            b[i] = (b[i] - s) / self.l[(i, i)];
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn backward(&self, y: &mut [f64]) {
        for k in (0..self.dim()).rev() {
            y[k] /= self.l[(k, k)];
            let xk = y[k];
            let fk = self.first[k];
            let row = &self.l.row(k)[fk..k];
            for (yj, lkj) in y[fk..k].iter_mut().zip(row) {
                *yj -= lkj * xk;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    /// `L^{-1} M`, row-oriented.
    pub fn forward_mat(&self, m: &Mat) -> Mat {
        let n = self.dim();
        assert_eq!(m.rows(), n);
        let mut y = m.clone();
        let c = m.cols();
        for i in 0..n {
            let fi = self.first[i];
            let (done, rest) = y.data.split_at_mut(i * c);
            let yi = &mut rest[..c];
            for k in fi..i {
                let lik = self.l[(i, k)];
                if lik != 0.0 {
                    axpy(-lik, &done[k * c..(k + 1) * c], yi);
                }
            }
            let d = 1.0 / self.l[(i, i)];
            yi.iter_mut().for_each(|v| *v *= d);
        }
        y
    }

    /// `L^{-T} M`, row-oriented.
    pub fn backward_mat(&self, m: &Mat) -> Mat {
        let n = self.dim();
        assert_eq!(m.rows(), n);
        let mut y = m.clone();
        let c = m.cols();
        for k in (0..n).rev() {
            let d = 1.0 / self.l[(k, k)];
            let (head, tail) = y.data.split_at_mut(k * c);
            let yk = &mut tail[..c];
            yk.iter_mut().for_each(|v| *v *= d);
            for j in self.first[k]..k {
                let lkj = self.l[(k, j)];
                if lkj != 0.0 {
                    axpy(-lkj, yk, &mut head[j * c..(j + 1) * c]);
                }
            }
        }
        y
    }
}

/// Dense solve with partial pivoting, for small systems.
pub fn lu_solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[(i, k)].abs().partial_cmp(&m[(j, k)].abs()).unwrap())
            .unwrap();
        if m[(p, k)].abs() < 1e-300 {
            return Err(Error::Precondition(String::from("singular matrix in lu_solve")));
        }
        if p != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            x.swap(k, p);
        }
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            if f != 0.0 {
                for j in k..n {
                    m[(i, j)] -= f * m[(k, j)];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (x[i] - s) / m[(i, i)];
    }
    Ok(x)
}

/// Eigenvalues ascending, eigenvectors as matching columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Option<Mat>,
}

fn sorted(values: Vec<f64>, vectors: Option<Mat>) -> Eigen {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(core::cmp::Ordering::Equal));
    let vals = order.iter().map(|&i| values[i]).collect();
    let vecs = vectors.map(|v| Mat::from_fn(v.rows(), n, |r, c| v[(r, order[c])]));
    Eigen { values: vals, vectors: vecs }
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn jacobi_eigen(a: &Mat, want_vectors: bool) -> Eigen {
    let n = a.rows();
    let mut a = a.clone();
    a.symmetrize();
    let mut v = want_vectors.then(|| Mat::identity(n));
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-17 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    sorted((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Householder reduction to tridiagonal form and implicit QL.
///
/// Works on the transpose of the classical layout so that every inner loop
/// walks a contiguous row.
pub fn tridiagonal_ql_eigen(a: &Mat, want_vectors: bool) -> Eigen {
    let n = a.rows();
    if n == 0 {
        return Eigen { values: Vec::new(), vectors: want_vectors.then(|| Mat::zeros(0, 0)) };
    }
    // w[(j, k)] holds V[k][j] of the reference formulation.
    let mut w = a.transpose();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        d[j] = w[(j, n - 1)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = w[(j, i - 1)];
                w[(j, i)] = 0.0;
                w[(i, j)] = 0.0;
            }
        } else {
            for dk in d[..i].iter_mut() {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].iter_mut().for_each(|x| *x = 0.0);
            for j in 0..i {
                f = d[j];
                w[(i, j)] = f;
                let wj = w.row(j);
                g = e[j] + wj[j] * f;
                for k in j + 1..i {
                    g += wj[k] * d[k];
                    e[k] += wj[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let wj = w.row_mut(j);
                for k in j..i {
                    wj[k] -= f * e[k] + g * d[k];
                }
                d[j] = wj[i - 1];
                wj[i] = 0.0;
            }
        }
        d[i] = h;
    }

    if want_vectors {
        for i in 0..n - 1 {
            w[(i, n - 1)] = w[(i, i)];
            w[(i, i)] = 1.0;
            let h = d[i + 1];
            if h != 0.0 {
                for k in 0..=i {
                    d[k] = w[(i + 1, k)] / h;
                }
                for j in 0..=i {
                    let g = dot(&w.row(i + 1)[..=i], &w.row(j)[..=i]);
                    let wj = w.row_mut(j);
                    for k in 0..=i {
                        wj[k] -= g * d[k];
                    }
                }
            }
            for k in 0..=i {
                w[(i + 1, k)] = 0.0;
            }
        }
        for j in 0..n {
            d[j] = w[(j, n - 1)];
            w[(j, n - 1)] = 0.0;
        }
        w[(n - 1, n - 1)] = 1.0;
    } else {
        for j in 0..n {
            d[j] = w[(j, j)];
        }
    }
    e[0] = 0.0;

    // Implicit QL on the tridiagonal (d, e).
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d[l + 2..].iter_mut() {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if want_vectors {
                        let (lo, hi) = w.data.split_at_mut((i + 1) * n);
                        let wi = &mut lo[i * n..];
                        let wi1 = &mut hi[..n];
                        for k in 0..n {
                            let hk = wi1[k];
                            wi1[k] = s * wi[k] + c * hk;
                            wi[k] = c * wi[k] - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || iter >= 200 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    // Row j of w is eigenvector j.
    sorted(d, want_vectors.then(|| w.transpose()))
}

/// Symmetric eigen decomposition; picks the solver by size.
pub fn symmetric_eigen(a: &Mat, want_vectors: bool) -> Eigen {
    if a.rows() <= JACOBI_MAX_DIM {
        jacobi_eigen(a, want_vectors)
    } else {
        tridiagonal_ql_eigen(a, want_vectors)
    }
}

/// `H x = lambda G x` with `G` symmetric positive definite.
///
/// Returned vectors are `G`-orthonormal.
pub fn generalized_eigen(h: &Mat, g: &Mat, want_vectors: bool) -> Result<Eigen> {
    let chol = Cholesky::new(g)?;
    generalized_eigen_with(h, &chol, want_vectors)
}

pub fn generalized_eigen_with(h: &Mat, chol: &Cholesky, want_vectors: bool) -> Result<Eigen> {
    if h.rows() != chol.dim() || h.cols() != chol.dim() {
        return Err(Error::Dimension(format!(
            "H is {}x{}, G is {}x{}",
            h.rows(),
            h.cols(),
            chol.dim(),
            chol.dim()
        )));
    }
    let y = chol.forward_mat(h);
    let mut c = chol.forward_mat(&y.transpose());
    c.symmetrize();
    let eig = symmetric_eigen(&c, want_vectors);
    let vectors = eig.vectors.map(|v| chol.backward_mat(&v));
    Ok(Eigen { values: eig.values, vectors })
}
