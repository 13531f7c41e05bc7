//! Lawson–Hanson active-set solver for `min ||A x - b||_2` subject to
//! `x >= 0`.
//!
//! Each passive-set subproblem is solved from scratch with a Householder QR
//! factorization, which is cheap at the sizes used here (six columns) and
//! avoids the drift of updating a factorization in place. Columns are scaled
//! to unit norm internally, so counters of very different magnitudes do not
//! disturb the pivoting.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnlsError {
    #[error("matrix has {rows} rows but the right-hand side has {rhs} entries")]
    DimensionMismatch { rows: usize, rhs: usize },
    #[error("empty problem")]
    Empty,
    #[error("non-finite input")]
    NonFinite,
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
}

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    /// Builds a matrix from row slices, all of the same length.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Matrix::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            for (j, v) in r.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn column_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows];
        for (j, xj) in x.iter().enumerate() {
            if *xj == T::zero() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.column(j)) {
                *o = *o + *a * *xj;
            }
        }
        out
    }

    /// `A^T v`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.cols).map(|j| dot(self.column(j), v)).collect()
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[j * self.rows + i]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[j * self.rows + i]
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn norm<T: Scalar>(a: &[T]) -> T {
    // Scaled to avoid overflow on large counter columns.
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let s = a.iter().fold(T::zero(), |acc, v| {
        let t = *v / scale;
        acc + t * t
    });
    scale * s.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution<T> {
    pub x: Vec<T>,
    /// `||A x - b||_2`.
    pub residual_norm: T,
    /// Columns that were identically zero; their coefficients are 0.
    pub zero_columns: Vec<usize>,
    pub iterations: usize,
}

/// Least squares on the columns `cols` of `a` via Householder QR.
///
/// Returns one coefficient per entry of `cols`. Columns that turn out to be
/// numerically dependent on earlier ones get a zero coefficient.
fn least_squares<T: Scalar>(a: &Matrix<T>, cols: &[usize], b: &[T]) -> Vec<T> {
    let m = a.rows();
    let k = cols.len();
    let mut w = Matrix::zeros(m, k);
    for (c, &j) in cols.iter().enumerate() {
        w.column_mut(c).copy_from_slice(a.column(j));
    }
    let mut rhs = b.to_vec();
    let two = T::one() + T::one();
    for j in 0..k.min(m) {
        let alpha = {
            let col = &w.column(j)[j..];
            let n = norm(col);
            if n == T::zero() {
                continue;
            }
            if col[0] > T::zero() {
                -n
            } else {
                n
            }
        };
        let mut v = w.column(j)[j..].to_vec();
        v[0] = v[0] - alpha;
        let vv = dot(&v, &v);
        if vv == T::zero() {
            continue;
        }
        for c in j..k {
            let col = &mut w.column_mut(c)[j..];
            let s = two * dot(&v, col) / vv;
            for (x, vi) in col.iter_mut().zip(&v) {
                *x = *x - s * *vi;
            }
        }
        let tail = &mut rhs[j..];
        let s = two * dot(&v, tail) / vv;
        for (x, vi) in tail.iter_mut().zip(&v) {
            *x = *x - s * *vi;
        }
    }
    let rmax = (0..k.min(m)).fold(T::zero(), |acc, j| acc.max(w[(j, j)].abs()));
    let rank_tol = T::epsilon() * T::from_count(m.max(k) as u64) * rmax;
    let mut z = vec![T::zero(); k];
    for j in (0..k.min(m)).rev() {
        let rjj = w[(j, j)];
        if rjj.abs() <= rank_tol {
            continue;
        }
        let mut s = rhs[j];
        for l in j + 1..k {
            s = s - w[(j, l)] * z[l];
        }
        z[j] = s / rjj;
    }
    z
}

/// Solves the NNLS problem exactly (up to floating-point rounding).
///
/// Scaling `b` by a power of two scales the solution by the same factor
/// bit-for-bit.
pub fn nnls<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<NnlsSolution<T>, NnlsError> {
    let (m, n) = (a.rows(), a.cols());
    if m != b.len() {
        return Err(NnlsError::DimensionMismatch { rows: m, rhs: b.len() });
    }
    if m == 0 || n == 0 {
        return Err(NnlsError::Empty);
    }
    if a.data.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(NnlsError::NonFinite);
    }

    let mut scaled = a.clone();
    let mut col_norm = vec![T::zero(); n];
    let mut zero_columns = Vec::new();
    for (j, cn) in col_norm.iter_mut().enumerate() {
        *cn = norm(a.column(j));
        if *cn == T::zero() {
            zero_columns.push(j);
        } else {
            for v in scaled.column_mut(j) {
                *v = *v / *cn;
            }
        }
    }

    let active_cols = T::from_count((n - zero_columns.len()) as u64);
    let tol = T::from_count(10)
        * T::epsilon()
        * T::from_count(m.max(n) as u64)
        * active_cols.sqrt()
        * norm(b);

    let mut x = vec![T::zero(); n];
    let mut passive = vec![false; n];
    let mut blocked = vec![false; n];
    let max_iter = 30 * n.max(3);
    let mut iterations = 0;

    loop {
        let r: Vec<T> = scaled.mul_vec(&x).iter().zip(b).map(|(ax, bi)| *bi - *ax).collect();
        let w = scaled.tr_mul_vec(&r);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !blocked[j] && col_norm[j] != T::zero() && w[j] > tol)
            .max_by(|&i, &j| w[i].partial_cmp(&w[j]).expect("finite gradient"));
        let Some(t) = candidate else { break };
        passive[t] = true;

        let mut first = true;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(NnlsError::NoConvergence(iterations));
            }
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let zp = least_squares(&scaled, &cols, b);
            let mut z = vec![T::zero(); n];
            for (&j, v) in cols.iter().zip(&zp) {
                z[j] = *v;
            }
            if cols.iter().all(|&j| z[j] > T::zero()) {
                x = z;
                blocked.iter_mut().for_each(|f| *f = false);
                break;
            }
            if first && z[t] <= T::zero() {
                // Rounding made the entering column look useful; drop it and
                // try the next one.
                passive[t] = false;
                blocked[t] = true;
                break;
            }
            first = false;
            let mut alpha = T::infinity();
            let mut leaving = t;
            for &j in &cols {
                if z[j] <= T::zero() {
                    let a = x[j] / (x[j] - z[j]);
                    if a < alpha {
                        alpha = a;
                        leaving = j;
                    }
                }
            }
            for &j in &cols {
                x[j] = x[j] + alpha * (z[j] - x[j]);
            }
            x[leaving] = T::zero();
            for &j in &cols {
                if x[j] <= T::zero() {
                    x[j] = T::zero();
                    passive[j] = false;
                }
            }
            blocked.iter_mut().for_each(|f| *f = false);
        }
    }

    let mut out = vec![T::zero(); n];
    for j in 0..n {
        if col_norm[j] != T::zero() {
            out[j] = x[j] / col_norm[j];
        }
    }
    let residual: Vec<T> = a.mul_vec(&out).iter().zip(b).map(|(ax, bi)| *ax - *bi).collect();
    Ok(NnlsSolution { x: out, residual_norm: norm(&residual), zero_columns, iterations })
}
