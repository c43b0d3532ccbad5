//! Minimal dense linear algebra.
//!
//! Everything here works on [`DenseMatrix`], a row-major matrix of `f64`.
//! The routines are sized for adapters of rank at most a few dozen and for
//! brute-force covariance checks on matrices of a few thousand rows, so the
//! loops are plain and unblocked.

use std::fmt;

use crate::error::{Error, Result};

/// Kronecker products (and any other oracle-scale assembly) may not exceed
/// this many rows or columns.
pub const ORACLE_SIZE_CAP: usize = 4096;

/// Relative rank tolerance for [`compact_svd`]: singular values at or below
/// `RANK_TOL_REL * d_max` are treated as zero.
pub const RANK_TOL_REL: f64 = 1e-8;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Row-major dense matrix of 64-bit floats.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
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

impl DenseMatrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) = {}",
                pos / cols.max(1),
                pos % cols.max(1),
                data[pos]
            )));
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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from literal rows. Panics on ragged input; intended for
    /// constants and tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self::new(r, c, data).expect("literal matrix must be finite")
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

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry (the entrywise infinity norm).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Largest absolute entrywise difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Self::new(self.rows, self.cols, data)
    }

    /// `self · diag(d)`: scales column j by `d[j]`.
    pub fn scale_columns(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.cols);
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * d[j])
    }

    /// `diag(d) · self`: scales row i by `d[i]`.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.rows);
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * d[i])
    }

    /// Matrix-vector product. Panics if `x.len() != self.cols()`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "mul_vec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · x`. Panics if `x.len() != self.rows()`.
    pub fn mul_vec_transposed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "mul_vec_transposed dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    /// Trace of a square matrix.
    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Column-major vectorization, `vec(X)`: column j occupies entries
    /// `j*rows .. (j+1)*rows`.
    pub fn vec_col_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Submatrix of the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self.get(rows[i], cols[j]))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard matrix product.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul {}x{} · {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = vec![0.0; a.rows * b.cols];
    for i in 0..a.rows {
        let out_row = &mut out[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            for (o, bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    DenseMatrix::new(a.rows, b.cols, out)
}

/// Kronecker product `a ⊗ b`, capped at [`ORACLE_SIZE_CAP`] in each dimension.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    if rows > ORACLE_SIZE_CAP || cols > ORACLE_SIZE_CAP {
        return Err(Error::SizeCap {
            rows,
            cols,
            cap: ORACLE_SIZE_CAP,
        });
    }
    let (p, q) = b.shape();
    Ok(DenseMatrix::from_fn(rows, cols, |r, c| {
        a.get(r / p, c / q) * b.get(r % p, c % q)
    }))
}

/// Thin SVD `B = U · diag(d) · Vᵀ` of an `m × r` matrix with `m ≥ r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `m × r`, orthonormal columns.
    pub u: DenseMatrix,
    /// Singular values, strictly positive and non-increasing.
    pub d: Vec<f64>,
    /// `r × r`, orthogonal.
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DenseMatrix {
        matmul(&self.u.scale_columns(&self.d), &self.v.transpose())
            .expect("SVD factors have consistent shapes")
    }
}

/// Compact SVD of a thin, full-column-rank matrix.
///
/// Uses one-sided (Hestenes) Jacobi rotations, which diagonalize `BᵀB`
/// implicitly without forming it, so the smallest singular value keeps full
/// relative accuracy against the rank tolerance. Singular vectors are signed
/// so that the largest-magnitude entry of every column of `V` is positive
/// (ties go to the lowest row index).
pub fn compact_svd(b: &DenseMatrix) -> Result<SvdResult> {
    let (m, r) = b.shape();
    if r == 0 {
        return Err(Error::Shape(
            "compact_svd of a matrix with zero columns".into(),
        ));
    }
    if m < r {
        return Err(Error::Shape(format!(
            "compact_svd requires m >= r, got {m}x{r}"
        )));
    }

    // Work column-wise: cols[j] is column j of B, rotated in place.
    let mut cols: Vec<Vec<f64>> = (0..r).map(|j| b.column(j)).collect();
    let mut v = DenseMatrix::identity(r);

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..r {
            for q in (p + 1)..r {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (xp, xq) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (a, bq) = (*xp, *xq);
                    *xp = c * a - s * bq;
                    *xq = s * a + c * bq;
                }
                for i in 0..r {
                    let (a, bq) = (v.get(i, p), v.get(i, q));
                    v.set(i, p, c * a - s * bq);
                    v.set(i, q, s * a + c * bq);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..r).collect();
    // Stable sort keeps equal singular values in column order.
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let d: Vec<f64> = order.iter().map(|&k| norms[k]).collect();
    let d_max = d[0];
    let d_min = d[r - 1];
    let tolerance = RANK_TOL_REL * d_max;
    if !(d_max > 0.0) || d_min <= tolerance {
        return Err(Error::RankDeficient {
            smallest: d_min,
            tolerance,
        });
    }

    let mut u = DenseMatrix::zeros(m, r);
    let mut v_sorted = DenseMatrix::zeros(r, r);
    for (new_j, &old_j) in order.iter().enumerate() {
        // Sign convention from V's column.
        let mut best = 0;
        for i in 1..r {
            if v.get(i, old_j).abs() > v.get(best, old_j).abs() {
                best = i;
            }
        }
        let sign = if v.get(best, old_j) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..r {
            v_sorted.set(i, new_j, sign * v.get(i, old_j));
        }
        let inv = sign / d[new_j];
        for i in 0..m {
            u.set(i, new_j, cols[old_j][i] * inv);
        }
    }

    Ok(SvdResult { u, d, v: v_sorted })
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// Only the upper triangle is trusted to be symmetric with the lower one.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::Shape(
            "symmetric_eigenvalues needs a square matrix".into(),
        ));
    }
    let mut w = a.clone();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| w.get(i, j) * w.get(i, j))
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (w.get(q, q) - w.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (w.get(k, p), w.get(k, q));
                    w.set(k, p, c * akp - s * akq);
                    w.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (w.get(p, k), w.get(q, k));
                    w.set(p, k, c * apk - s * aqk);
                    w.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| w.get(i, i)).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::Shape("cholesky needs a square matrix".into()));
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a.get(j, j);
        for k in 0..j {
            diag -= l.get(j, k) * l.get(j, k);
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// `log |A|` from a Cholesky factor of A.
pub fn cholesky_log_det(l: &DenseMatrix) -> f64 {
    2.0 * (0..l.rows).map(|i| l.get(i, i).ln()).sum::<f64>()
}

/// Solves `A x = rhs` given the Cholesky factor `L` of A.
pub fn cholesky_solve(l: &DenseMatrix, rhs: &[f64]) -> Vec<f64> {
    let n = l.rows;
    assert_eq!(rhs.len(), n);
    let mut y = rhs.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    y
}

/// Extends the orthonormal columns of `u` (m × r) to a full orthogonal
/// `m × m` basis `[U, U⊥]` by Gram-Schmidt against the canonical vectors.
pub fn orthonormal_completion(u: &DenseMatrix) -> DenseMatrix {
    let (m, r) = u.shape();
    let mut basis: Vec<Vec<f64>> = (0..r).map(|j| u.column(j)).collect();
    let mut candidate = 0;
    while basis.len() < m && candidate < m {
        let mut e = vec![0.0; m];
        e[candidate] = 1.0;
        candidate += 1;
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(&e, q);
                for (x, qi) in e.iter_mut().zip(q) {
                    *x -= proj * qi;
                }
            }
        }
        let norm = dot(&e, &e).sqrt();
        if norm > 1e-6 {
            basis.push(e.into_iter().map(|x| x / norm).collect());
        }
    }
    DenseMatrix::from_fn(m, m, |i, j| basis[j][i])
}
