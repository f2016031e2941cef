//! Dense linear algebra kernels used by the projection steps.
//!
//! Everything here is row-major and dense. The sizes that show up in practice
//! are the number of observed outputs (tens to a few hundred), for which a
//! straightforward implementation is both adequate and easy to audit.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major entries. All entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
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
        Self { rows, cols, data }
    }

    /// Builds a matrix from a slice of equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Largest absolute entry, zero for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `A·x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.cols, x.len())?;
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `Aᵀ·y`.
    pub fn matvec_transposed(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(yi, self.row(i), &mut out);
            }
        }
        Ok(out)
    }

    /// `A·B`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_len(self.cols, other.rows)?;
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a != 0.0 {
                    axpy(a, other.row(k), out.row_mut(i));
                }
            }
        }
        Ok(out)
    }

    /// Copies the listed columns, in order, into a new matrix.
    pub fn select_columns(&self, cols: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])])
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Lower-triangular factor with strictly positive diagonal.
///
/// Stored as a full square row-major block; the strictly upper part is kept
/// at zero.
#[derive(Clone, PartialEq)]
pub struct LowerTriangular {
    dim: usize,
    data: Vec<f64>,
}

impl LowerTriangular {
    /// Wraps a square matrix, zeroing nothing: the strictly upper entries must
    /// already be zero and the diagonal strictly positive.
    pub fn from_dense(m: DenseMatrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::DimensionMismatch {
                expected: m.rows,
                found: m.cols,
            });
        }
        let n = m.rows;
        for i in 0..n {
            if m[(i, i)] <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    index: i,
                    pivot: m[(i, i)],
                });
            }
            if m.row(i)[i + 1..].iter().any(|&x| x != 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "row {i} has non-zero entries above the diagonal"
                )));
            }
        }
        Ok(Self { dim: n, data: m.data })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            dim: n,
            data: DenseMatrix::identity(n).data,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..i * self.dim + i + 1]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// `Σ log L_ii`, which equals `½ log det(L·Lᵀ)`.
    pub fn log_diag_sum(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).ln()).sum()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix {
            rows: self.dim,
            cols: self.dim,
            data: self.data.clone(),
        }
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.dim;
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&self.row(i)[..=j], &self.row(j)[..=j]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

impl fmt::Debug for LowerTriangular {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LowerTriangular({:?})", self.to_dense())
    }
}

/// Relative size of the diagonal shift applied when the first factorization
/// attempt hits a non-positive pivot.
pub const CHOLESKY_JITTER: f64 = 1e-10;

/// Cholesky factorization `A = L·Lᵀ` of a symmetric positive-definite matrix.
///
/// Only the lower triangle of `a` is read. On pivot failure the diagonal is
/// shifted once by `1e-10·trace(A)/dim` and the factorization retried; a second
/// failure is reported as [`Error::NotPositiveDefinite`].
pub fn cholesky(a: &DenseMatrix) -> Result<LowerTriangular> {
    if a.rows != a.cols {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            found: a.cols,
        });
    }
    match cholesky_unshifted(a, 0.0) {
        Ok(l) => Ok(l),
        Err(Error::NotPositiveDefinite { .. }) => {
            let n = a.rows.max(1) as f64;
            let trace: f64 = (0..a.rows).map(|i| a[(i, i)]).sum();
            cholesky_unshifted(a, CHOLESKY_JITTER * trace.abs() / n)
        }
        Err(e) => Err(e),
    }
}

fn cholesky_unshifted(a: &DenseMatrix, shift: f64) -> Result<LowerTriangular> {
    let n = a.rows;
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
    let floor = n as f64 * f64::EPSILON * max_diag;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let row_j = &l[j * n..j * n + j];
        let d = a[(j, j)] + shift - dot(row_j, row_j);
        if !(d > floor) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let s = a[(i, j)] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            l[i * n + j] = s / ljj;
        }
    }
    Ok(LowerTriangular { dim: n, data: l })
}

/// Solves `L·x = b`, or `Lᵀ·x = b` when `transposed` is set.
pub fn solve_triangular(l: &LowerTriangular, b: &[f64], transposed: bool) -> Result<Vec<f64>> {
    check_len(l.dim, b.len())?;
    let n = l.dim;
    let mut x = b.to_vec();
    if !transposed {
        for i in 0..n {
            let row = l.row(i);
            let s = x[i] - dot(&row[..i], &x[..i]);
            x[i] = s / row[i];
        }
    } else {
        for i in (0..n).rev() {
            x[i] /= l.get(i, i);
            let xi = x[i];
            for (xk, &lik) in x[..i].iter_mut().zip(&l.row(i)[..i]) {
                *xk -= lik * xi;
            }
        }
    }
    Ok(x)
}

/// Solves `(L·Lᵀ)·x = b` by a forward then a backward substitution.
pub fn cholesky_solve(l: &LowerTriangular, b: &[f64]) -> Result<Vec<f64>> {
    let y = solve_triangular(l, b, false)?;
    solve_triangular(l, &y, true)
}

/// Solves `L·X = B` (or `Lᵀ·X = B`) for every column of `B` at once.
pub fn solve_triangular_matrix(
    l: &LowerTriangular,
    b: &DenseMatrix,
    transposed: bool,
) -> Result<DenseMatrix> {
    check_len(l.dim, b.rows)?;
    let (n, m) = (l.dim, b.cols);
    let mut x = b.clone();
    if !transposed {
        for i in 0..n {
            let (done, rest) = x.data.split_at_mut(i * m);
            let xi = &mut rest[..m];
            for (k, &lik) in l.row(i)[..i].iter().enumerate() {
                if lik != 0.0 {
                    axpy(-lik, &done[k * m..(k + 1) * m], xi);
                }
            }
            let d = 1.0 / l.get(i, i);
            xi.iter_mut().for_each(|v| *v *= d);
        }
    } else {
        for i in (0..n).rev() {
            let (head, rest) = x.data.split_at_mut(i * m);
            let xi = &mut rest[..m];
            let d = 1.0 / l.get(i, i);
            xi.iter_mut().for_each(|v| *v *= d);
            for (k, &lik) in l.row(i)[..i].iter().enumerate() {
                if lik != 0.0 {
                    axpy(-lik, xi, &mut head[k * m..(k + 1) * m]);
                }
            }
        }
    }
    Ok(x)
}

/// Returns `L'` with `L'·L'ᵀ = L·Lᵀ + v·vᵀ`.
pub fn chol_rank1_update(l: &LowerTriangular, v: &[f64]) -> Result<LowerTriangular> {
    check_len(l.dim, v.len())?;
    let mut out = l.clone();
    let mut work = v.to_vec();
    chol_rank1_update_in_place(&mut out, &mut work);
    Ok(out)
}

/// In-place rank-1 update; `work` holds `v` on entry and is clobbered.
///
/// Uses the Givens-rotation form of the LINPACK `dchud` recurrence, which
/// cannot fail for an update with `+v·vᵀ`.
pub fn chol_rank1_update_in_place(l: &mut LowerTriangular, work: &mut [f64]) {
    let n = l.dim;
    debug_assert_eq!(work.len(), n);
    for j in 0..n {
        let vj = work[j];
        if vj == 0.0 {
            continue;
        }
        let ljj = l.data[j * n + j];
        let r = ljj.hypot(vj);
        let c = r / ljj;
        let s = vj / ljj;
        let c_inv = ljj / r;
        l.data[j * n + j] = r;
        for i in j + 1..n {
            let lij = (l.data[i * n + j] + s * work[i]) * c_inv;
            l.data[i * n + j] = lij;
            work[i] = c * work[i] - s * lij;
        }
    }
}

/// Gram matrix `J·Jᵀ`, symmetric by construction.
pub fn gram(j: &DenseMatrix) -> DenseMatrix {
    let n = j.rows;
    let mut out = DenseMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let v = dot(j.row(a), j.row(b));
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    out
}

/// LU factorization with partial pivoting, used where a square but
/// non-symmetric system must be solved (the projection fallback).
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::DimensionMismatch {
                expected: a.rows,
                found: a.cols,
            });
        }
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pv <= n as f64 * f64::EPSILON * scale {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, b.len())?;
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s = dot(&self.lu[i * n..i * n + i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s = dot(&self.lu[i * n + i + 1..(i + 1) * n], &x[i + 1..]);
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        Ok(x)
    }
}

/// Inner product with four interleaved partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha·x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_pcg::Pcg32;

    fn random_matrix(rng: &mut Pcg32, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_factor(rng: &mut Pcg32, n: usize) -> LowerTriangular {
        let m = DenseMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => 0.0,
            std::cmp::Ordering::Equal => rng.random_range(0.5..2.0),
            std::cmp::Ordering::Greater => rng.random_range(-1.0..1.0),
        });
        LowerTriangular::from_dense(m).unwrap()
    }

    fn max_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    /// Determinant by Laplace expansion along the first row.
    fn det_brute(a: &DenseMatrix) -> f64 {
        let n = a.rows();
        if n == 1 {
            return a[(0, 0)];
        }
        (0..n)
            .map(|j| {
                let minor = DenseMatrix::from_fn(n - 1, n - 1, |r, c| {
                    a[(r + 1, if c < j { c } else { c + 1 })]
                });
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[(0, j)] * det_brute(&minor)
            })
            .sum()
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(l.to_dense(), DenseMatrix::identity(3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        assert!((l.get(0, 0) - 2.0).abs() < 1e-15);
        assert_eq!(l.get(0, 1), 0.0);
        assert!((l.get(1, 0) - 1.0).abs() < 1e-15);
        assert!((l.get(1, 1) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cholesky_random_gram_reconstructs() {
        let mut rng = Pcg32::seed_from_u64(11);
        let b = random_matrix(&mut rng, 8, 8);
        let m = b.matmul(&b.transpose()).unwrap();
        let l = cholesky(&m).unwrap();
        assert!(max_diff(&l.reconstruct(), &m) <= 1e-10 * m.max_abs());
        assert!(l.diagonal().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&a), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn cholesky_jitter_rescues_marginal_pivot() {
        // exactly singular 2x2 with positive trace: shifted retry succeeds
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        assert!(max_diff(&l.reconstruct(), &a) < 1e-9);
    }

    #[test]
    fn solve_identity() {
        let x = solve_triangular(&LowerTriangular::identity(3), &[1.0, 2.0, 3.0], false).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn solve_hand_example() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        let x = solve_triangular(&l, &[2.0, 1.0 + 2f64.sqrt()], false).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn solve_dimension_mismatch() {
        let l = LowerTriangular::identity(2);
        assert!(matches!(
            solve_triangular(&l, &[1.0], true),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rank1_update_forced_case() {
        let l = chol_rank1_update(&LowerTriangular::identity(2), &[1.0, 0.0]).unwrap();
        assert!((l.get(0, 0) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(l.get(1, 0), 0.0);
        assert_eq!(l.get(1, 1), 1.0);
    }

    #[test]
    fn rank1_update_zero_vector() {
        let mut rng = Pcg32::seed_from_u64(3);
        let l = random_factor(&mut rng, 5);
        assert_eq!(chol_rank1_update(&l, &[0.0; 5]).unwrap(), l);
    }

    #[test]
    fn rank1_update_matches_dense_recompute() {
        let mut rng = Pcg32::seed_from_u64(5);
        for n in [1, 2, 7, 20] {
            let l = random_factor(&mut rng, n);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut target = l.reconstruct();
            for i in 0..n {
                for j in 0..n {
                    target[(i, j)] += v[i] * v[j];
                }
            }
            let dense = cholesky(&target).unwrap();
            let updated = chol_rank1_update(&l, &v).unwrap();
            assert!(max_diff(&updated.to_dense(), &dense.to_dense()) < 1e-10 * target.max_abs());
        }
    }

    #[test]
    fn gram_examples() {
        let j = DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(gram(&j), DenseMatrix::identity(2));
        let j = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(gram(&j).as_slice(), &[2.0]);
    }

    #[test]
    fn gram_matches_naive_loop() {
        let mut rng = Pcg32::seed_from_u64(8);
        let j = random_matrix(&mut rng, 6, 9);
        let g = gram(&j);
        for a in 0..6 {
            for b in 0..6 {
                let mut s = 0.0;
                for k in 0..9 {
                    s += j[(a, k)] * j[(b, k)];
                }
                assert!((g[(a, b)] - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn log_diag_sum_matches_brute_force_determinant() {
        let mut rng = Pcg32::seed_from_u64(13);
        for n in 1..=6 {
            let j = random_matrix(&mut rng, n, n + 3);
            let g = gram(&j);
            let l = cholesky(&g).unwrap();
            let expected = 0.5 * det_brute(&g).ln();
            assert!((l.log_diag_sum() - expected).abs() < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn lu_solves_nonsymmetric_system() {
        let mut rng = Pcg32::seed_from_u64(21);
        let a = random_matrix(&mut rng, 7, 7);
        let x: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
        let b = a.matvec(&x).unwrap();
        let got = Lu::factor(&a).unwrap().solve(&b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-10);
        }
    }

    #[test]
    fn lu_detects_singular() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(Lu::factor(&a), Err(Error::Singular)));
    }

    #[test]
    fn dense_matrix_rejects_non_finite() {
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::new(2, 2, vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn cholesky_reconstructs_random_spd(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = Pcg32::seed_from_u64(seed);
            let b = random_matrix(&mut rng, n, n + 2);
            let a = gram(&b);
            let l = cholesky(&a).unwrap();
            let r = l.reconstruct();
            let frob = |m: &DenseMatrix| m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff = DenseMatrix::from_fn(n, n, |i, j| r[(i, j)] - a[(i, j)]);
            prop_assert!(frob(&diff) <= 1e-10 * frob(&a));
        }

        #[test]
        fn triangular_solve_residual(seed in any::<u64>(), n in 1usize..64, transposed in any::<bool>()) {
            let mut rng = Pcg32::seed_from_u64(seed);
            let l = random_factor(&mut rng, n);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = solve_triangular(&l, &b, transposed).unwrap();
            let m = if transposed { l.to_dense().transpose() } else { l.to_dense() };
            let r = m.matvec(&x).unwrap();
            let resid: f64 = r.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            // relative to the scale of the problem |L||x|
            let scale = norm2(&b).max(m.max_abs() * norm2(&x) * n as f64);
            prop_assert!(resid <= 1e-12 * scale);
        }

        #[test]
        fn matrix_solve_matches_column_solves(seed in any::<u64>(), n in 1usize..20, m in 1usize..6, transposed in any::<bool>()) {
            let mut rng = Pcg32::seed_from_u64(seed);
            let l = random_factor(&mut rng, n);
            let b = DenseMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let x = solve_triangular_matrix(&l, &b, transposed).unwrap();
            for j in 0..m {
                let col = solve_triangular(&l, &b.column(j), transposed).unwrap();
                for i in 0..n {
                    prop_assert!((x[(i, j)] - col[i]).abs() <= 1e-12 * (1.0 + col[i].abs()));
                }
            }
        }

        #[test]
        fn rank1_update_property(seed in any::<u64>(), n in 1usize..16) {
            let mut rng = Pcg32::seed_from_u64(seed);
            let l = random_factor(&mut rng, n);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let u = chol_rank1_update(&l, &v).unwrap();
            let lhs = u.reconstruct();
            let mut rhs = l.reconstruct();
            for i in 0..n { for j in 0..n { rhs[(i, j)] += v[i] * v[j]; } }
            prop_assert!(max_diff(&lhs, &rhs) <= 1e-10 * rhs.max_abs());
        }
    }
}
