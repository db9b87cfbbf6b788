//! Dense row-major matrices and the factorizations the rest of the crate
//! builds on: one-sided Jacobi SVD, cyclic Jacobi symmetric eigensolver,
//! Householder QR, LU solves and Cholesky.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Sweep cap for both Jacobi iterations.
pub const JACOBI_MAX_SWEEPS: usize = 60;
/// Relative off-diagonal tolerance at which a Jacobi rotation is skipped.
pub const JACOBI_TOL: f64 = 1e-14;
/// Relative asymmetry admitted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix must be nonempty")]
    Empty,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("Jacobi iteration did not converge within {cap} sweeps")]
    NotConverged { cap: usize },
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting NaN and infinities.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { row: pos / cols.max(1), col: pos % cols.max(1) });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LinalgError::DimensionMismatch("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.concat())
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

    /// Wraps row-major data produced internally; the caller vouches for the length.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Copy of the block `rows × cols` given as half-open ranges.
    pub fn submatrix(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        let (r0, c0) = (rows.start, cols.start);
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::from_raw(idx.len(), self.cols, data)
    }

    pub fn select_cols(&self, idx: &[usize]) -> Self {
        Self::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_raw(self.rows, self.cols, data))
    }

    /// Adds `s` to every diagonal entry in place.
    pub fn shift_diagonal(&mut self, s: f64) {
        for i in 0..self.rows.min(self.cols) {
            self.data[i * self.cols + i] += s;
        }
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry magnitude.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let crow = &mut c.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
    Ok(c)
}

/// `aᵀ b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "({}x{})ᵀ times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let arow = a.row(k);
        let brow = b.row(k);
        for (i, &aki) in arow.iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let crow = &mut c.data[i * b.cols..(i + 1) * b.cols];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aki * bv;
            }
        }
    }
    Ok(c)
}

/// Thin singular value decomposition `m = u · diag(s) · vt`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let us = Matrix::from_fn(self.u.rows, self.u.cols, |i, j| {
            self.u[(i, j)] * self.singular_values[j]
        });
        matmul(&us, &self.vt).expect("svd factors are conformant")
    }

    /// Keeps the leading `r` triplets.
    pub fn truncate(&self, r: usize) -> SvdResult {
        let r = r.min(self.rank());
        SvdResult {
            u: self.u.submatrix(0..self.u.rows, 0..r),
            singular_values: self.singular_values[..r].to_vec(),
            vt: self.vt.submatrix(0..r, 0..self.vt.cols),
        }
    }

    /// `diag(s) · vt` for the kept triplets.
    pub fn s_vt(&self) -> Matrix {
        Matrix::from_fn(self.vt.rows, self.vt.cols, |i, j| self.singular_values[i] * self.vt[(i, j)])
    }
}

/// Result of [`truncated_svd`].
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub svd: SvdResult,
    /// ℓ² norm of the discarded singular values.
    pub discarded_norm: f64,
    /// Set when the whole spectrum fits under the threshold and the leading
    /// triplet was kept only because rank zero is not allowed.
    pub floor_hit: bool,
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if m.rows == 0 || m.cols == 0 {
        return Err(LinalgError::Empty);
    }
    if !m.is_finite() {
        let pos = m.data.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(LinalgError::NonFinite { row: pos / m.cols, col: pos % m.cols });
    }
    if m.rows < m.cols {
        let t = svd(&m.transpose())?;
        return Ok(SvdResult { u: t.vt.transpose(), singular_values: t.singular_values, vt: t.u.transpose() });
    }
    // Tall inputs: rotate the square triangular factor instead.
    if m.rows >= 2 * m.cols {
        let (q, r) = qr(m);
        let t = svd(&r)?;
        return Ok(SvdResult { u: matmul(&q, &t.u)?, singular_values: t.singular_values, vt: t.vt });
    }
    let (rows, n) = (m.rows, m.cols);
    // Columns of m stored contiguously.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    // Rounding in length-`rows` dot products sits near rows·ε; a tolerance
    // below that level can keep re-rotating converged pairs.
    let tol = JACOBI_TOL.max(rows as f64 * f64::EPSILON);
    // Columns this small relative to the whole matrix are left alone.
    let negligible = {
        let fro = m.frobenius_norm();
        (f64::MIN_POSITIVE / f64::EPSILON).sqrt().max(fro * 1e-150)
    };
    let mut converged = n == 1;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        // A column at roundoff size next to the largest one only carries
        // rotation noise and would never test as orthogonal.
        let largest = cols.iter().map(|c| norm2(c)).fold(0.0, f64::max);
        let negligible = negligible.max(largest * f64::EPSILON);
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                if alpha.sqrt() <= negligible || beta.sqrt() <= negligible {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= tol * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                rotate(&mut left[p], &mut right[0], c, s);
                let (left, right) = v.split_at_mut(q);
                rotate(&mut left[p], &mut right[0], c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(LinalgError::NotConverged { cap: JACOBI_MAX_SWEEPS });
    }
    let sigma: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let smax = sigma[order[0]];
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let s = sigma[j];
        if s > smax * f64::EPSILON * rows as f64 && s > 0.0 {
            ucols.push(cols[j].iter().map(|x| x / s).collect());
        } else {
            ucols.push(vec![0.0; rows]);
            deficient.push(k);
        }
    }
    if !deficient.is_empty() {
        complete_orthonormal(&mut ucols, &deficient);
    }
    let singular_values: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    let u = Matrix::from_fn(rows, n, |i, k| ucols[k][i]);
    let vt = Matrix::from_fn(n, n, |k, i| v[order[k]][i]);
    Ok(SvdResult { u, singular_values, vt })
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Fills the listed zero columns with unit vectors orthogonal to all others.
fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize]) {
    let m = cols[0].len();
    let mut candidate = 0;
    for &k in missing {
        while candidate < m {
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (j, c) in cols.iter().enumerate() {
                    if j == k {
                        continue;
                    }
                    let proj = dot(c, &e);
                    for (ei, ci) in e.iter_mut().zip(c) {
                        *ei -= proj * ci;
                    }
                }
            }
            let nrm = norm2(&e);
            if nrm > 1e-8 {
                cols[k] = e.iter().map(|x| x / nrm).collect();
                break;
            }
        }
    }
}

/// Keeps the fewest leading triplets whose discarded tail has ℓ² norm at most
/// `abs_threshold`; ties discard. At least one triplet is always kept.
pub fn truncated_svd(m: &Matrix, abs_threshold: f64) -> Result<TruncatedSvd> {
    let full = svd(m)?;
    Ok(truncate_by_tail(full, abs_threshold))
}

pub(crate) fn truncate_by_tail(full: SvdResult, abs_threshold: f64) -> TruncatedSvd {
    let (keep, discarded_norm) = tail_rank(&full.singular_values, abs_threshold);
    let floor_hit = norm2(&full.singular_values) <= abs_threshold;
    TruncatedSvd { svd: full.truncate(keep), discarded_norm, floor_hit }
}

/// Smallest `r ≥ 1` with `‖σ[r..]‖₂ ≤ threshold`, and that tail norm.
pub fn tail_rank(sigma: &[f64], threshold: f64) -> (usize, f64) {
    let mut tail_sq = 0.0;
    let mut keep = sigma.len();
    for r in (1..sigma.len()).rev() {
        let next = tail_sq + sigma[r] * sigma[r];
        if next.sqrt() <= threshold {
            tail_sq = next;
            keep = r;
        } else {
            break;
        }
    }
    (keep.max(1), tail_sq.sqrt())
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues come back non-increasing; eigenvector `i` is column `i`.
pub fn sym_eig(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !m.is_square() {
        return Err(LinalgError::DimensionMismatch(format!("{}x{} is not square", m.rows, m.cols)));
    }
    if m.rows == 0 {
        return Err(LinalgError::Empty);
    }
    let asym = m.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(LinalgError::Asymmetric(asym));
    }
    let n = m.rows;
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
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
    if !converged {
        return Err(LinalgError::NotConverged { cap: JACOBI_MAX_SWEEPS });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = v.select_cols(&order);
    Ok((values, vectors))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> Result<f64> {
    let (vals, _) = sym_eig(m)?;
    Ok(*vals.last().expect("nonempty"))
}

/// Thin Householder QR: `m = q · r` with `q` having orthonormal columns.
pub fn qr(m: &Matrix) -> (Matrix, Matrix) {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    let mut a = m.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: Vec<f64> = (j..rows).map(|i| a[(i, j)]).collect();
        let alpha = norm2(&v);
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vn = norm2(&v);
        if vn > 0.0 {
            for x in &mut v {
                *x /= vn;
            }
            for c in j..cols {
                let proj: f64 = (j..rows).map(|i| v[i - j] * a[(i, c)]).sum();
                for i in j..rows {
                    a[(i, c)] -= 2.0 * v[i - j] * proj;
                }
            }
        }
        reflectors.push(v);
    }
    let r = Matrix::from_fn(k, cols, |i, j| if j >= i { a[(i, j)] } else { 0.0 });
    let mut q = Matrix::from_fn(rows, k, |i, j| if i == j { 1.0 } else { 0.0 });
    for j in (0..k).rev() {
        let v = &reflectors[j];
        for c in 0..k {
            let proj: f64 = (j..rows).map(|i| v[i - j] * q[(i, c)]).sum();
            if proj != 0.0 {
                for i in j..rows {
                    q[(i, c)] -= 2.0 * v[i - j] * proj;
                }
            }
        }
    }
    (q, r)
}

/// LU factorization with partial pivoting, packed in place.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(LinalgError::DimensionMismatch(format!("{}x{} is not square", m.rows, m.cols)));
        }
        let n = m.rows;
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = m.max_abs();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= scale * f64::EPSILON * n as f64 || pmax == 0.0 {
                return Err(LinalgError::Singular);
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows != self.lu.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "rhs has {} rows, system has {}",
                b.rows, self.lu.rows
            )));
        }
        let mut x = Matrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let col = self.solve_vec(&b.column(j));
            for (i, v) in col.into_iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        Ok(x)
    }
}

pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    Lu::new(a)?.solve(b)
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    solve(a, &Matrix::identity(a.rows))
}

/// Matrix exponential by scaling and squaring with a Taylor series.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch(format!("{}x{} is not square", a.rows, a.cols)));
    }
    let norm = a.frobenius_norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a.scale(0.5f64.powi(squarings as i32));
    let mut sum = Matrix::identity(a.rows);
    let mut term = Matrix::identity(a.rows);
    for k in 1..=24 {
        term = matmul(&term, &scaled)?.scale(1.0 / k as f64);
        sum = sum.add(&term)?;
    }
    for _ in 0..squarings {
        sum = matmul(&sum, &sum)?;
    }
    Ok(sum)
}

/// Lower-triangular Cholesky factor `l` with `m = l lᵀ`.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(LinalgError::DimensionMismatch(format!("{}x{} is not square", m.rows, m.cols)));
    }
    let n = m.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let d = m[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite);
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let s = m[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `lᵀ x = b` for lower-triangular `l`.
pub fn solve_upper_transposed(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[(k, i)] * x[k]).sum();
        x[i] = (x[i] - s) / l[(i, i)];
    }
    x
}

/// Reads a matrix written one row per line, comma separated. Lines starting
/// with `#` and blank lines are skipped.
pub fn matrix_from_csv(text: &str) -> std::result::Result<Matrix, String> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        rows.push(row);
    }
    Matrix::from_rows(&rows).map_err(|e| e.to_string())
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
