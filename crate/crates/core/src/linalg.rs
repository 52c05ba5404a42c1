//! Small dense linear algebra: symmetric solves, Jacobi eigendecomposition
//! and Kronecker-structured products.

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
    #[error("matrix is singular (column {0})")]
    Singular(usize),
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self::from_fn(rows.len(), cols, |i, j| rows[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| (k / self.cols, k % self.cols))
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "matvec shape");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `scale * self + shift * I`.
    pub fn scale_add_identity(&self, scale: T, shift: T) -> Self {
        let mut m = self.clone();
        for v in m.data.iter_mut() {
            *v *= scale;
        }
        for i in 0..m.rows.min(m.cols) {
            m[(i, i)] += shift;
        }
        m
    }
}

impl<T> std::ops::Index<(usize, usize)> for DMat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DMat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Dot product with four independent accumulators.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (T::zero(), T::zero(), T::zero(), T::zero());
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for k in 4 * chunks..n {
        s += a[k] * b[k];
    }
    s
}

/// Lower Cholesky factor `L` with `A = L L^T`.
pub fn cholesky<T: Scalar>(a: &DMat<T>) -> Result<DMat<T>, LinalgError> {
    if a.rows != a.cols {
        return Err(LinalgError::Shape(format!("{}x{} not square", a.rows, a.cols)));
    }
    let n = a.rows;
    let mut l = DMat::zeros(n, n);
    for j in 0..n {
        let lj: Vec<T> = l.row(j)[..j].to_vec();
        let d = a[(j, j)] - dot(&lj, &lj);
        if !(d > T::zero()) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite(j));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &lj);
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L L^T x = b` given the lower factor.
pub fn cholesky_solve<T: Scalar>(l: &DMat<T>, b: &[T]) -> Vec<T> {
    let n = l.rows;
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let s = b[i] - dot(&l.row(i)[..i], &y[..i]);
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Gaussian elimination with partial pivoting.
pub fn lu_solve<T: Scalar>(a: &DMat<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    let n = a.rows;
    if a.cols != n || b.len() != n {
        return Err(LinalgError::Shape(format!("{}x{} vs rhs {}", a.rows, a.cols, b.len())));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(col);
        if !(m[(piv, col)].abs() > T::zero()) {
            return Err(LinalgError::Singular(col));
        }
        if piv != col {
            for k in 0..n {
                m.data.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        let p = m[(col, col)];
        for i in (col + 1)..n {
            let f = m[(i, col)] / p;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = m[(col, k)];
                m[(i, k)] -= f * v;
            }
            let xc = x[col];
            x[i] -= f * xc;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= m[(i, k)] * x[k];
        }
        x[i] = s / m[(i, i)];
    }
    Ok(x)
}

/// Solves a symmetric positive definite system, falling back to pivoted
/// elimination when the Cholesky factorization breaks down.
pub fn spd_solve<T: Scalar>(a: &DMat<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    if let Some((i, j)) = a.first_non_finite() {
        return Err(LinalgError::NonFinite(i, j));
    }
    match cholesky(a) {
        Ok(l) => Ok(cholesky_solve(&l, b)),
        Err(LinalgError::NotPositiveDefinite(_)) => lu_solve(a, b),
        Err(e) => Err(e),
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues and a matrix whose columns are the matching eigenvectors.
pub fn sym_eigen<T: Scalar>(a: &DMat<T>) -> (Vec<T>, DMat<T>) {
    let n = a.rows;
    let mut m = a.clone();
    let mut v = DMat::identity(n);
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        let scale: T = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum::<T>() + off;
        if off <= eps * eps * scale || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let tau = (aqq - app) / (apq + apq);
                let t = tau.signum() / (tau.abs() + (T::one() + tau * tau).sqrt());
                let t = if tau == T::zero() { T::one() } else { t };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
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
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}

/// Computes `(A_0 ⊗ A_1 ⊗ ... ⊗ A_{k-1}) x` where `x` is a row-major tensor
/// with axis lengths equal to the matrices' column counts.
pub fn kron_matvec<T: Scalar>(mats: &[&DMat<T>], x: &[T]) -> Vec<T> {
    let mut shape: Vec<usize> = mats.iter().map(|m| m.cols).collect();
    assert_eq!(shape.iter().product::<usize>(), x.len(), "kron_matvec shape");
    let mut cur = x.to_vec();
    for (axis, m) in mats.iter().enumerate() {
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let n_in = shape[axis];
        let n_out = m.rows;
        let mut next = vec![T::zero(); outer * n_out * inner];
        for o in 0..outer {
            for r in 0..n_out {
                let row = m.row(r);
                let dst = &mut next[(o * n_out + r) * inner..(o * n_out + r + 1) * inner];
                for (c, &w) in row.iter().enumerate().take(n_in) {
                    if w == T::zero() {
                        continue;
                    }
                    let src = &cur[(o * n_in + c) * inner..(o * n_in + c + 1) * inner];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        shape[axis] = n_out;
        cur = next;
    }
    cur
}
