//! Discrete Tensor-Train tensors.
//!
//! A tensor `T ∈ R^{n_1 × … × n_d}` is stored as cores `G_k` of shape
//! `r_{k-1} × n_k × r_k` with `r_0 = r_d = 1`, and
//! `T(i_1, …, i_d) = G_1(i_1) ⋯ G_d(i_d)` where `G_k(i)` is the
//! `r_{k-1} × r_k` slice.
//!
//! Index conventions (all 0-based):
//! - core entry `(a, i, b)` lives at `(a * n + i) * r_right + b`;
//! - [`DenseTensor`] stores entries with the *first* index fastest, so the
//!   linear position of `(i_1, …, i_d)` is `i_1 + n_1 (i_2 + n_2 (i_3 + …))`;
//! - the `k`-matricization has row `i_1 + n_1 (… + n_{k-1} i_k)` and column
//!   `i_{k+1} + n_{k+1} (… )`, i.e. the same first-fastest rule on each side.
//!
//! # Binary format
//!
//! [`TtTensor::write_to`] emits, all little-endian:
//! `b"TTNS"`, `u32` version (= 1), `u64` d, `d × u64` mode sizes,
//! `(d + 1) × u64` ranks, then every core's entries as `f64` in storage order.

use std::io::{Read, Write};

use thiserror::Error;

use crate::linalg::{self, matmul, qr, svd, tail_rank, LinalgError, Matrix, SvdResult};

/// Largest dense tensor `tt_svd` will unfold.
pub const DEFAULT_DENSE_CAP: usize = 10_000_000;
/// Relative numerical-rank tolerance used for exact-rank decisions.
pub const RANK_TOL: f64 = 1e-10;

const MAGIC: &[u8; 4] = b"TTNS";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TtError {
    #[error("invalid TT structure: {0}")]
    InvalidStructure(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index {index:?} out of range for mode sizes {modes:?}")]
    IndexOutOfRange { index: Vec<usize>, modes: Vec<usize> },
    #[error("dense tensor has {entries} entries, above the cap of {cap}; use cross approximation instead")]
    DenseCapExceeded { entries: usize, cap: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed TT file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, TtError>;

/// Full tensor held in memory, first index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) {
            return Err(TtError::InvalidStructure(format!("bad shape {shape:?}")));
        }
        if len != data.len() {
            return Err(TtError::ShapeMismatch(format!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let len: usize = shape.iter().product();
        let mut idx = vec![0; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            increment_first_fastest(&mut idx, shape);
        }
        Self { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn linear_index(&self, index: &[usize]) -> usize {
        index.iter().rev().zip(self.shape.iter().rev()).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.linear_index(index)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        linalg::norm2(&self.data)
    }

    /// The `k`-matricization, `1 ≤ k < d`.
    pub fn unfold(&self, k: usize) -> Result<Matrix> {
        let d = self.shape.len();
        if k == 0 || k >= d {
            return Err(TtError::ShapeMismatch(format!("split {k} outside 1..{d}")));
        }
        let rows: usize = self.shape[..k].iter().product();
        let cols: usize = self.shape[k..].iter().product();
        // Linear position is row + rows * col under the first-fastest rule.
        Ok(Matrix::from_fn(rows, cols, |r, c| self.data[r + rows * c]))
    }
}

pub(crate) fn increment_first_fastest(idx: &mut [usize], shape: &[usize]) {
    for (i, &n) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < n {
            return;
        }
        *i = 0;
    }
}

/// Order-3 core `r_left × n × r_right`.
#[derive(Debug, Clone, PartialEq)]
pub struct Core {
    left: usize,
    mode: usize,
    right: usize,
    data: Vec<f64>,
}

impl Core {
    pub fn new(left: usize, mode: usize, right: usize, data: Vec<f64>) -> Result<Self> {
        if left == 0 || mode == 0 || right == 0 {
            return Err(TtError::InvalidStructure(format!("core shape {left}x{mode}x{right}")));
        }
        if data.len() != left * mode * right {
            return Err(TtError::ShapeMismatch(format!(
                "core {left}x{mode}x{right} needs {} entries, got {}",
                left * mode * right,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TtError::InvalidStructure("non-finite core entry".into()));
        }
        Ok(Self { left, mode, right, data })
    }

    pub fn from_fn(left: usize, mode: usize, right: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(left * mode * right);
        for a in 0..left {
            for i in 0..mode {
                for b in 0..right {
                    data.push(f(a, i, b));
                }
            }
        }
        Self { left, mode, right, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.left, self.mode, self.right)
    }

    pub fn left_rank(&self) -> usize {
        self.left
    }

    pub fn mode_size(&self) -> usize {
        self.mode
    }

    pub fn right_rank(&self) -> usize {
        self.right
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, a: usize, i: usize, b: usize) -> f64 {
        self.data[(a * self.mode + i) * self.right + b]
    }

    /// The `r_left × r_right` slice for mode index `i`.
    pub fn slice(&self, i: usize) -> Matrix {
        Matrix::from_fn(self.left, self.right, |a, b| self.at(a, i, b))
    }

    /// `(r_left · n) × r_right`, row `a * n + i`.
    pub fn left_unfolding(&self) -> Matrix {
        Matrix::from_raw(self.left * self.mode, self.right, self.data.clone())
    }

    /// `r_left × (n · r_right)`, column `i * r_right + b`.
    pub fn right_unfolding(&self) -> Matrix {
        Matrix::from_raw(self.left, self.mode * self.right, self.data.clone())
    }

    pub(crate) fn from_left_unfolding(m: Matrix, mode: usize) -> Self {
        let (rows, right) = m.shape();
        Self { left: rows / mode, mode, right, data: m.into_vec() }
    }

    pub(crate) fn from_right_unfolding(m: Matrix, mode: usize) -> Self {
        let (left, cols) = m.shape();
        Self { left, mode, right: cols / mode, data: m.into_vec() }
    }

    /// Multiplies slice `i` by `w[i]`.
    pub fn scale_mode(&self, w: &[f64]) -> Self {
        Self::from_fn(self.left, self.mode, self.right, |a, i, b| self.at(a, i, b) * w[i])
    }

    /// Contracts the mode index with `coeffs`: `Σ_i coeffs[i] G(i)`.
    pub fn contract_mode(&self, coeffs: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(self.left, self.right);
        for a in 0..self.left {
            let out = m.row_mut(a);
            for (i, &c) in coeffs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let base = (a * self.mode + i) * self.right;
                for (o, v) in out.iter_mut().zip(&self.data[base..base + self.right]) {
                    *o += c * v;
                }
            }
        }
        m
    }
}

/// A tensor in TT format. Immutable once built; every operation returns a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct TtTensor {
    cores: Vec<Core>,
}

impl TtTensor {
    pub fn new(cores: Vec<Core>) -> Result<Self> {
        if cores.is_empty() {
            return Err(TtError::InvalidStructure("no cores".into()));
        }
        if cores[0].left != 1 || cores[cores.len() - 1].right != 1 {
            return Err(TtError::InvalidStructure("boundary ranks must be 1".into()));
        }
        for (k, w) in cores.windows(2).enumerate() {
            if w[0].right != w[1].left {
                return Err(TtError::InvalidStructure(format!(
                    "core {k} right rank {} != core {} left rank {}",
                    w[0].right,
                    k + 1,
                    w[1].left
                )));
            }
        }
        Ok(Self { cores })
    }

    /// The rank-1 tensor `v_1 ⊗ … ⊗ v_d`.
    pub fn rank_one(factors: &[Vec<f64>]) -> Result<Self> {
        let cores = factors
            .iter()
            .map(|v| Core::new(1, v.len(), 1, v.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(cores)
    }

    /// Cores with i.i.d. uniform entries in `[-1, 1]`.
    pub fn random(modes: &[usize], ranks: &[usize], rng: &mut impl rand::Rng) -> Result<Self> {
        if ranks.len() != modes.len() + 1 {
            return Err(TtError::InvalidStructure("need d + 1 ranks".into()));
        }
        let cores = modes
            .iter()
            .enumerate()
            .map(|(k, &n)| Core::from_fn(ranks[k], n, ranks[k + 1], |_, _, _| rng.random_range(-1.0..1.0)))
            .collect();
        Self::new(cores)
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn into_cores(self) -> Vec<Core> {
        self.cores
    }

    pub fn dim(&self) -> usize {
        self.cores.len()
    }

    pub fn mode_sizes(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.mode).collect()
    }

    /// `(r_0, …, r_d)`.
    pub fn ranks(&self) -> Vec<usize> {
        std::iter::once(1).chain(self.cores.iter().map(|c| c.right)).collect()
    }

    /// Largest interior rank; 1 for `d = 1`.
    pub fn max_rank(&self) -> usize {
        let r = self.ranks();
        r[1..r.len() - 1].iter().copied().max().unwrap_or(1)
    }

    /// Number of stored core entries.
    pub fn storage(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }

    pub fn eval_entry(&self, index: &[usize]) -> Result<f64> {
        if index.len() != self.dim() || index.iter().zip(&self.cores).any(|(&i, c)| i >= c.mode) {
            return Err(TtError::IndexOutOfRange { index: index.to_vec(), modes: self.mode_sizes() });
        }
        Ok(self.eval_unchecked(index))
    }

    pub(crate) fn eval_unchecked(&self, index: &[usize]) -> f64 {
        let mut v = vec![1.0];
        for (core, &i) in self.cores.iter().zip(index) {
            let mut next = vec![0.0; core.right];
            for (a, &va) in v.iter().enumerate() {
                if va == 0.0 {
                    continue;
                }
                let base = (a * core.mode + i) * core.right;
                for (n, g) in next.iter_mut().zip(&core.data[base..base + core.right]) {
                    *n += va * g;
                }
            }
            v = next;
        }
        v[0]
    }

    /// Expands to a dense tensor. Only for small instances.
    pub fn to_dense(&self) -> DenseTensor {
        let shape = self.mode_sizes();
        DenseTensor::from_fn(&shape, |idx| self.eval_unchecked(idx))
    }

    /// Frobenius norm by core-wise Gram accumulation.
    pub fn frobenius_norm(&self) -> f64 {
        dot(self, self).expect("same shape").max(0.0).sqrt()
    }

    /// Multiplies slice `i` of core `k` by `weights[k][i]`.
    pub fn scale_modes(&self, weights: &[Vec<f64>]) -> Result<Self> {
        if weights.len() != self.dim() || weights.iter().zip(&self.cores).any(|(w, c)| w.len() != c.mode) {
            return Err(TtError::ShapeMismatch("weights do not match mode sizes".into()));
        }
        Ok(Self { cores: self.cores.iter().zip(weights).map(|(c, w)| c.scale_mode(w)).collect() })
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut cores = self.cores.clone();
        for v in &mut cores[0].data {
            *v *= s;
        }
        Self { cores }
    }

    /// Rounds to relative Frobenius accuracy `rel_accuracy`: right-to-left
    /// orthogonalization, then left-to-right truncated SVDs with a uniform
    /// per-split budget `rel_accuracy · ‖t‖ / √(d-1)`.
    pub fn round(&self, rel_accuracy: f64) -> Self {
        let d = self.dim();
        if d == 1 {
            return self.clone();
        }
        let mut cores = right_orthogonalize(&self.cores);
        let norm = linalg::norm2(&cores[0].data);
        let delta = rel_accuracy.max(0.0) * norm / ((d - 1) as f64).sqrt();
        for k in 0..d - 1 {
            let mode = cores[k].mode;
            let m = cores[k].left_unfolding();
            let t = match svd(&m) {
                Ok(full) => linalg::truncate_by_tail(full, delta).svd,
                // Jacobi failure on an already orthogonal core is not expected;
                // fall back to keeping the core as is.
                Err(_) => continue,
            };
            let carry = t.s_vt();
            cores[k] = Core::from_left_unfolding(t.u, mode);
            let next_mode = cores[k + 1].mode;
            let next = matmul(&carry, &cores[k + 1].right_unfolding()).expect("conformant");
            cores[k + 1] = Core::from_right_unfolding(next, next_mode);
        }
        Self { cores }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        for n in self.mode_sizes() {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for r in self.ranks() {
            w.write_all(&(r as u64).to_le_bytes())?;
        }
        for core in &self.cores {
            for v in &core.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TtError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(TtError::Format(format!("unsupported version {version}")));
        }
        let read_u64 = |r: &mut dyn Read| -> Result<usize> {
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)?;
            usize::try_from(u64::from_le_bytes(b8)).map_err(|_| TtError::Format("size overflow".into()))
        };
        let d = read_u64(&mut r)?;
        if d == 0 || d > 1 << 16 {
            return Err(TtError::Format(format!("implausible dimension {d}")));
        }
        let modes = (0..d).map(|_| read_u64(&mut r)).collect::<Result<Vec<_>>>()?;
        let ranks = (0..=d).map(|_| read_u64(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let len = ranks[k]
                .checked_mul(modes[k])
                .and_then(|x| x.checked_mul(ranks[k + 1]))
                .ok_or_else(|| TtError::Format("core size overflow".into()))?;
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            cores.push(Core::new(ranks[k], modes[k], ranks[k + 1], data)?);
        }
        Self::new(cores)
    }
}

/// Orthogonalizes cores `d-1 … 1` so that each right unfolding has
/// orthonormal rows; the norm ends up in the first core.
pub fn right_orthogonalize(cores: &[Core]) -> Vec<Core> {
    let mut cores = cores.to_vec();
    for k in (1..cores.len()).rev() {
        let mode = cores[k].mode;
        let (q, r) = qr(&cores[k].right_unfolding().transpose());
        cores[k] = Core::from_right_unfolding(q.transpose(), mode);
        let prev_mode = cores[k - 1].mode;
        let prev = matmul(&cores[k - 1].left_unfolding(), &r.transpose()).expect("conformant");
        cores[k - 1] = Core::from_left_unfolding(prev, prev_mode);
    }
    cores
}

/// Orthogonalizes cores `0 … d-2` so each left unfolding has orthonormal columns.
pub fn left_orthogonalize(cores: &[Core]) -> Vec<Core> {
    let mut cores = cores.to_vec();
    for k in 0..cores.len().saturating_sub(1) {
        let mode = cores[k].mode;
        let (q, r) = qr(&cores[k].left_unfolding());
        cores[k] = Core::from_left_unfolding(q, mode);
        let next_mode = cores[k + 1].mode;
        let next = matmul(&r, &cores[k + 1].right_unfolding()).expect("conformant");
        cores[k + 1] = Core::from_right_unfolding(next, next_mode);
    }
    cores
}

/// `‖a - b‖_F` through orthogonalization of the difference, which keeps
/// relative accuracy where `‖a‖² + ‖b‖² - 2⟨a, b⟩` would cancel.
pub fn distance(a: &TtTensor, b: &TtTensor) -> Result<f64> {
    let diff = add(a, &b.scale(-1.0))?;
    Ok(right_orthogonalize(diff.cores())[0].data().iter().map(|v| v * v).sum::<f64>().sqrt())
}

fn check_same_modes(a: &TtTensor, b: &TtTensor) -> Result<()> {
    if a.mode_sizes() != b.mode_sizes() {
        return Err(TtError::ShapeMismatch(format!("{:?} vs {:?}", a.mode_sizes(), b.mode_sizes())));
    }
    Ok(())
}

/// Inner product `Σ a(i) b(i)` without densifying.
pub fn dot(a: &TtTensor, b: &TtTensor) -> Result<f64> {
    check_same_modes(a, b)?;
    // gram[α, β] accumulates the left partial contraction.
    let mut gram = Matrix::identity(1);
    for (ca, cb) in a.cores.iter().zip(&b.cores) {
        let mut next = Matrix::zeros(ca.right, cb.right);
        for i in 0..ca.mode {
            let sa = ca.slice(i);
            let sb = cb.slice(i);
            let left = linalg::matmul_tn(&sa, &matmul(&gram, &sb)?)?;
            next = next.add(&left)?;
        }
        gram = next;
    }
    Ok(gram[(0, 0)])
}

/// Entrywise product; ranks multiply.
pub fn hadamard(a: &TtTensor, b: &TtTensor) -> Result<TtTensor> {
    check_same_modes(a, b)?;
    let cores = a
        .cores
        .iter()
        .zip(&b.cores)
        .map(|(ca, cb)| {
            Core::from_fn(ca.left * cb.left, ca.mode, ca.right * cb.right, |a_, i, b_| {
                let (a1, a2) = (a_ / cb.left, a_ % cb.left);
                let (b1, b2) = (b_ / cb.right, b_ % cb.right);
                ca.at(a1, i, b1) * cb.at(a2, i, b2)
            })
        })
        .collect();
    TtTensor::new(cores)
}

/// Entrywise sum; ranks add (block-diagonal cores).
pub fn add(a: &TtTensor, b: &TtTensor) -> Result<TtTensor> {
    check_same_modes(a, b)?;
    let d = a.dim();
    if d == 1 {
        let c = Core::from_fn(1, a.cores[0].mode, 1, |_, i, _| a.cores[0].at(0, i, 0) + b.cores[0].at(0, i, 0));
        return TtTensor::new(vec![c]);
    }
    let cores = (0..d)
        .map(|k| {
            let (ca, cb) = (&a.cores[k], &b.cores[k]);
            let left = if k == 0 { 1 } else { ca.left + cb.left };
            let right = if k == d - 1 { 1 } else { ca.right + cb.right };
            // Block (x, y) indices for each summand; boundary cores share the single row/column.
            let first = k == 0;
            let last = k == d - 1;
            Core::from_fn(left, ca.mode, right, |x, i, y| {
                let xa = if first { Some(0) } else { (x < ca.left).then_some(x) };
                let ya = if last { Some(0) } else { (y < ca.right).then_some(y) };
                let xb = if first { Some(0) } else { x.checked_sub(ca.left) };
                let yb = if last { Some(0) } else { y.checked_sub(ca.right) };
                let mut v = 0.0;
                if let (Some(x), Some(y)) = (xa, ya) {
                    v += ca.at(x, i, y);
                }
                if let (Some(x), Some(y)) = (xb, yb) {
                    v += cb.at(x, i, y);
                }
                v
            })
        })
        .collect();
    TtTensor::new(cores)
}

/// TT-SVD of a dense tensor with an absolute tail threshold at every split.
/// Singular values at or below [`RANK_TOL`]`·σ₁` are always dropped so that
/// exact inputs come back at their matricization ranks.
pub fn tt_svd(full: &DenseTensor, abs_threshold_per_split: f64) -> Result<TtTensor> {
    tt_svd_capped(full, abs_threshold_per_split, DEFAULT_DENSE_CAP)
}

/// TT-SVD targeting relative accuracy `eps`: per-split budget `eps‖T‖/√(d-1)`.
pub fn tt_svd_relative(full: &DenseTensor, eps: f64) -> Result<TtTensor> {
    let d = full.shape.len();
    let delta = if d > 1 { eps * full.frobenius_norm() / ((d - 1) as f64).sqrt() } else { 0.0 };
    tt_svd(full, delta)
}

pub fn tt_svd_capped(full: &DenseTensor, abs_threshold_per_split: f64, cap: usize) -> Result<TtTensor> {
    if full.len() > cap {
        return Err(TtError::DenseCapExceeded { entries: full.len(), cap });
    }
    let shape = &full.shape;
    let d = shape.len();
    let mut cores = Vec::with_capacity(d);
    let mut rank = 1;
    // `rest` holds the remainder, rows = rank * n_k (left rank fastest), row-major.
    let mut rest_cols = full.len() / shape[0];
    let mut rest = Matrix::from_fn(shape[0], rest_cols, |r, c| full.data[r + shape[0] * c]);
    for k in 0..d - 1 {
        let n = shape[k];
        let t = truncate_numerical(svd(&rest)?, abs_threshold_per_split);
        let new_rank = t.rank();
        // Row of `rest` is a + rank * i.
        let core = Core::from_fn(rank, n, new_rank, |a, i, b| t.u[(a + rank * i, b)]);
        cores.push(core);
        let carry = t.s_vt(); // new_rank × rest_cols
        let next_n = shape[k + 1];
        let next_cols = rest_cols / next_n;
        // carry column c = i_{k+1} + next_n * c'
        rest = Matrix::from_fn(new_rank * next_n, next_cols, |row, c| {
            let (a, i) = (row % new_rank, row / new_rank);
            carry[(a, i + next_n * c)]
        });
        rank = new_rank;
        rest_cols = next_cols;
    }
    let n = shape[d - 1];
    cores.push(Core::from_fn(rank, n, 1, |a, i, _| rest[(a + rank * i, 0)]));
    TtTensor::new(cores)
}

fn truncate_numerical(full: SvdResult, abs_threshold: f64) -> SvdResult {
    let sigma = &full.singular_values;
    let s1 = sigma[0];
    let numerical = sigma.iter().take_while(|&&s| s > RANK_TOL * s1).count().max(1);
    let (tail_keep, _) = tail_rank(sigma, abs_threshold);
    full.truncate(numerical.min(tail_keep))
}

/// Count of singular values of the `k`-matricization above `tol · σ₁`.
pub fn matricization_rank(full: &DenseTensor, k: usize, tol: f64) -> Result<usize> {
    let s = svd(&full.unfold(k)?)?;
    let s1 = s.singular_values[0];
    Ok(s.singular_values.iter().filter(|&&v| v > tol * s1).count())
}
