//! Rank-adaptive TT-cross approximation of black-box tensors.
//!
//! The interpolant is built by alternating one-site sweeps. Each sweep
//! evaluates the oracle on fibers `I_k × [n_k] × J_{k+1}`, orthogonalizes the
//! fiber, and picks the next nested index set with [`maxvol`]. When the error
//! on a validation sample stops improving, random indices are added to the
//! right sets, which raises the ranks on the next left-to-right pass.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix};
use crate::tt::{self as tt_ops, Core, TtError, TtTensor};

/// Row swaps in [`maxvol`] stop once no coefficient exceeds this.
pub const MAXVOL_TOL: f64 = 1.01;
/// Fiber singular values below this fraction of the largest are discarded.
pub const FIBER_RANK_TOL: f64 = 1e-13;
/// A sweep that improves the validation error by less than this fraction
/// triggers a rank increase.
pub const STAGNATION_RATIO: f64 = 0.9;
/// The returned compressed TT is rounded at this fraction of the target.
pub const ROUNDING_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum CrossError {
    #[error("invalid cross configuration: {0}")]
    InvalidConfig(String),
    #[error("oracle returned a non-finite value at {0:?}")]
    NonFinite(Vec<usize>),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Tt(#[from] TtError),
}

pub type Result<T> = std::result::Result<T, CrossError>;

#[derive(Debug, Clone, PartialEq)]
pub struct CrossConfig {
    pub target_rel_accuracy: f64,
    pub initial_rank: usize,
    pub rank_increment: usize,
    pub max_rank: usize,
    pub max_sweeps: usize,
    pub validation_sample_count: usize,
    pub rng_seed: u64,
    /// Oracle-call budget; the run stops flagged once it is exceeded.
    pub max_evals: Option<usize>,
}

impl CrossConfig {
    pub fn new(target_rel_accuracy: f64) -> Self {
        Self {
            target_rel_accuracy,
            initial_rank: 2,
            rank_increment: 2,
            max_rank: 100,
            max_sweeps: 40,
            validation_sample_count: 1000,
            rng_seed: 0,
            max_evals: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("initial_rank", self.initial_rank),
            ("rank_increment", self.rank_increment),
            ("max_rank", self.max_rank),
            ("max_sweeps", self.max_sweeps),
            ("validation_sample_count", self.validation_sample_count),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(CrossError::InvalidConfig(format!("{name} must be at least 1")));
        }
        if !(self.target_rel_accuracy > 0.0) {
            return Err(CrossError::InvalidConfig(format!("target accuracy must be positive, got {}", self.target_rel_accuracy)));
        }
        if self.max_evals == Some(0) {
            return Err(CrossError::InvalidConfig("max_evals must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws multi-indices for error validation together with an importance
/// weight. The error estimate is `√(Σ w (f-t)² / Σ w f²)`.
pub trait IndexSampler: Sync {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64);

    /// Per-axis weights of the norm the sample estimates; `None` means counting measure.
    fn measure(&self) -> Option<&[Vec<f64>]> {
        None
    }
}

/// Uniform over the whole index grid; every weight is 1.
#[derive(Debug, Clone)]
pub struct UniformIndexSampler {
    modes: Vec<usize>,
}

impl UniformIndexSampler {
    pub fn new(modes: &[usize]) -> Self {
        Self { modes: modes.to_vec() }
    }
}

impl IndexSampler for UniformIndexSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
        (self.modes.iter().map(|&n| rng.random_range(0..n)).collect(), 1.0)
    }
}

/// Independent per-axis proposal `q(i) = Π_k p_k(i_k)`. With a per-axis
/// measure `μ_k` the weight is `Π μ_k(i_k) / p_k(i_k)`, so the estimate
/// targets the `μ`-weighted norm (quadrature weights, for instance).
#[derive(Debug, Clone)]
pub struct ProductIndexSampler {
    probs: Vec<Vec<f64>>,
    cumulative: Vec<Vec<f64>>,
    measure: Option<Vec<Vec<f64>>>,
}

impl ProductIndexSampler {
    /// `probs[k]` are unnormalized, nonnegative and not all zero.
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let mut normalized = Vec::with_capacity(probs.len());
        let mut cumulative = Vec::with_capacity(probs.len());
        for (k, p) in probs.into_iter().enumerate() {
            let total: f64 = p.iter().sum();
            if p.is_empty() || p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || !(total > 0.0) {
                return Err(CrossError::InvalidConfig(format!("axis {k}: proposal probabilities must be finite, ≥ 0, not all zero")));
            }
            let p: Vec<f64> = p.iter().map(|v| v / total).collect();
            let mut acc = 0.0;
            cumulative.push(p.iter().map(|v| { acc += v; acc }).collect());
            normalized.push(p);
        }
        Ok(Self { probs: normalized, cumulative, measure: None })
    }

    pub fn with_measure(mut self, measure: Vec<Vec<f64>>) -> Result<Self> {
        if measure.len() != self.probs.len() || measure.iter().zip(&self.probs).any(|(m, p)| m.len() != p.len()) {
            return Err(CrossError::InvalidConfig("measure shape does not match the proposal".into()));
        }
        self.measure = Some(measure);
        Ok(self)
    }

    pub fn probabilities(&self) -> &[Vec<f64>] {
        &self.probs
    }
}

impl IndexSampler for ProductIndexSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
        let mut weight = 1.0;
        let idx = self
            .cumulative
            .iter()
            .enumerate()
            .map(|(k, cdf)| {
                let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                let mut i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                while self.probs[k][i] == 0.0 {
                    i -= 1;
                }
                let mu = self.measure.as_ref().map_or(1.0, |m| m[k][i]);
                weight *= mu / self.probs[k][i];
                i
            })
            .collect();
        (idx, weight)
    }

    fn measure(&self) -> Option<&[Vec<f64>]> {
        self.measure.as_deref()
    }
}

/// Outcome of [`cross_approximate`].
#[derive(Debug, Clone)]
pub struct CrossResult {
    /// Interpolant rounded at `ROUNDING_FRACTION · target`, which exposes the
    /// ranks the data actually needs.
    pub tt: TtTensor,
    /// Interpolant exactly as produced by the last sweep.
    pub interpolant: TtTensor,
    /// Relative RMS error on a fresh sample not used for any decision.
    pub est_rel_error: f64,
    pub evaluations: usize,
    pub sweeps: usize,
    /// `est_rel_error ≤ target` and no budget or rank cap was hit.
    pub converged: bool,
    /// Left index sets `I_0 … I_{d-1}` (prefixes).
    pub left_pivots: Vec<Vec<Vec<usize>>>,
    /// Right index sets `J_1 … J_d` (suffixes), `right_pivots[k]` for `J_{k+1}`.
    pub right_pivots: Vec<Vec<Vec<usize>>>,
}

/// Greedy quasi-maximum-volume row selection on a tall `n × r` matrix of
/// full column rank. Returns `r` row indices; afterwards every coefficient of
/// `A · A[rows]⁻¹` is at most `tol` in magnitude.
pub fn maxvol(a: &Matrix, tol: f64, max_swaps: usize) -> Result<Vec<usize>> {
    let (n, r) = a.shape();
    if r == 0 || n < r {
        return Err(LinalgError::DimensionMismatch(format!("maxvol needs a tall matrix, got {n}x{r}")).into());
    }
    let mut rows = pivoted_rows(a);
    let sub = a.select_rows(&rows);
    let mut b = linalg::solve(&sub.transpose(), &a.transpose())?.transpose();
    for _ in 0..max_swaps {
        let (mut bi, mut bj, mut best) = (0, 0, 0.0);
        for i in 0..n {
            for (j, v) in b.row(i).iter().enumerate() {
                if v.abs() > best {
                    (bi, bj, best) = (i, j, v.abs());
                }
            }
        }
        if best <= tol {
            break;
        }
        rows[bj] = bi;
        let col = b.column(bj);
        let mut row = b.row(bi).to_vec();
        row[bj] -= 1.0;
        let pivot = b[(bi, bj)];
        for i in 0..n {
            let s = col[i] / pivot;
            if s != 0.0 {
                for (x, y) in b.row_mut(i).iter_mut().zip(&row) {
                    *x -= s * y;
                }
            }
        }
    }
    Ok(rows)
}

/// Rows chosen by Gaussian elimination with partial pivoting.
fn pivoted_rows(a: &Matrix) -> Vec<usize> {
    let (n, r) = a.shape();
    let mut work = a.clone();
    let mut used = vec![false; n];
    let mut rows = Vec::with_capacity(r);
    for j in 0..r {
        let p = (0..n).filter(|&i| !used[i]).max_by(|&x, &y| work[(x, j)].abs().total_cmp(&work[(y, j)].abs())).expect("n ≥ r");
        used[p] = true;
        rows.push(p);
        let pv = work[(p, j)];
        if pv == 0.0 {
            continue;
        }
        let prow = work.row(p).to_vec();
        for i in 0..n {
            if !used[i] {
                let f = work[(i, j)] / pv;
                if f != 0.0 {
                    for (x, y) in work.row_mut(i)[j..].iter_mut().zip(&prow[j..]) {
                        *x -= f * y;
                    }
                }
            }
        }
    }
    rows
}

/// Orthonormal basis of the numerical column space of `c`, at most `cap` wide.
fn column_basis(c: &Matrix, cap: usize) -> Result<Matrix> {
    Ok(column_basis_with_tail(c, cap)?.0)
}

/// Column basis plus `σ_last / σ₁` when every column was kept and the rows
/// could support more; zero when the basis already resolves the fibers.
fn column_basis_with_tail(c: &Matrix, cap: usize) -> Result<(Matrix, f64)> {
    let (q, r) = linalg::qr(c);
    let s = linalg::svd(&r)?;
    let s1 = s.singular_values[0];
    let keep = s.singular_values.iter().filter(|&&v| v > FIBER_RANK_TOL * s1).count().clamp(1, cap.min(s.rank()));
    let tail = if keep == c.cols() && c.cols() < c.rows() && s1 > 0.0 { s.singular_values[keep - 1] / s1 } else { 0.0 };
    Ok((linalg::matmul(&q, &s.u.submatrix(0..s.u.rows(), 0..keep))?, tail))
}

/// `q · q[rows]⁻¹`, the interpolating factor.
fn interpolation_factor(q: &Matrix, rows: &[usize]) -> Result<Matrix> {
    let sub = q.select_rows(rows);
    Ok(linalg::solve(&sub.transpose(), &q.transpose())?.transpose())
}

struct Oracle<'a, F> {
    f: &'a F,
    calls: usize,
}

impl<F: Fn(&[usize]) -> f64 + Sync> Oracle<'_, F> {
    fn eval(&mut self, points: &[Vec<usize>]) -> Result<Vec<f64>> {
        self.calls += points.len();
        let vals: Vec<f64> = points.par_iter().map(|p| (self.f)(p)).collect();
        match vals.iter().position(|v| !v.is_finite()) {
            Some(bad) => Err(CrossError::NonFinite(points[bad].clone())),
            None => Ok(vals),
        }
    }
}

struct Validation {
    points: Vec<Vec<usize>>,
    weights: Vec<f64>,
    values: Vec<f64>,
}

impl Validation {
    fn draw<F: Fn(&[usize]) -> f64 + Sync>(sampler: &dyn IndexSampler, m: usize, seed: u64, stream: u64, oracle: &mut Oracle<F>) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let (points, weights): (Vec<_>, Vec<_>) = (0..m).map(|_| sampler.sample(&mut rng)).unzip();
        let values = oracle.eval(&points)?;
        Ok(Self { points, weights, values })
    }

    fn error(&self, tt: &TtTensor) -> f64 {
        let approx: Vec<f64> = self.points.par_iter().map(|p| tt.eval_unchecked(p)).collect();
        weighted_relative_error(&self.values, &approx, &self.weights)
    }
}

/// `√(Σ w (f-t)² / Σ w f²)`, switching to the absolute weighted RMS when the
/// reference is numerically zero.
pub fn weighted_relative_error(exact: &[f64], approx: &[f64], weights: &[f64]) -> f64 {
    let (mut num, mut den, mut wsum) = (0.0, 0.0, 0.0);
    for ((f, t), w) in exact.iter().zip(approx).zip(weights) {
        num += w * (f - t) * (f - t);
        den += w * f * f;
        wsum += w;
    }
    if wsum == 0.0 {
        return 0.0;
    }
    if (den / wsum).sqrt() < 1e-300 {
        return (num / wsum).sqrt();
    }
    (num / den).sqrt()
}

/// `‖a - b‖ / ‖a‖` in the norm weighted by `measure`, computed in TT form.
fn relative_change(a: &TtTensor, b: &TtTensor, measure: Option<&[Vec<f64>]>) -> Result<f64> {
    let (a, b) = match measure {
        Some(m) => {
            let root: Vec<Vec<f64>> = m.iter().map(|w| w.iter().map(|v| v.sqrt()).collect()).collect();
            (a.scale_modes(&root)?, b.scale_modes(&root)?)
        }
        None => (a.clone(), b.clone()),
    };
    let diff = tt_ops::distance(&a, &b)?;
    let base = a.frobenius_norm();
    Ok(if base > 0.0 { diff / base } else { diff })
}

fn prefix_product(modes: &[usize], k: usize) -> usize {
    modes[..k].iter().fold(1usize, |a, &n| a.saturating_mul(n))
}

fn suffix_product(modes: &[usize], k: usize) -> usize {
    modes[k..].iter().fold(1usize, |a, &n| a.saturating_mul(n))
}

/// Cross approximation with validation indices drawn uniformly.
pub fn cross_approximate<F>(f: &F, modes: &[usize], cfg: &CrossConfig) -> Result<CrossResult>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    cross_approximate_with(f, modes, cfg, &UniformIndexSampler::new(modes))
}

/// Cross approximation of the oracle `f` on the grid `modes`.
///
/// The validation sample doubles as the pilot: its largest entries seed the
/// initial right index sets. Decisions use that sample only; the reported
/// error comes from a second, independent sample.
pub fn cross_approximate_with<F>(f: &F, modes: &[usize], cfg: &CrossConfig, sampler: &dyn IndexSampler) -> Result<CrossResult>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    cfg.validate()?;
    let d = modes.len();
    if d == 0 || modes.contains(&0) {
        return Err(CrossError::InvalidConfig(format!("bad mode sizes {modes:?}")));
    }
    let mut oracle = Oracle { f, calls: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let validation = Validation::draw(sampler, cfg.validation_sample_count, cfg.rng_seed, 1, &mut oracle)?;

    // Right sets J_1 … J_{d-1}; right[k] holds suffixes for modes k+1.. .
    let mut order: Vec<usize> = (0..validation.points.len()).collect();
    order.sort_by(|&a, &b| validation.values[b].abs().total_cmp(&validation.values[a].abs()));
    let mut right: Vec<Vec<Vec<usize>>> = vec![Vec::new(); d];
    right[d - 1] = vec![Vec::new()];
    for k in 0..d - 1 {
        let cap = cfg.initial_rank.min(cfg.max_rank).min(suffix_product(modes, k + 1)).min(prefix_product(modes, k + 1));
        let mut seen = HashSet::new();
        for &p in &order {
            if right[k].len() >= cap {
                break;
            }
            let suffix = validation.points[p][k + 1..].to_vec();
            if seen.insert(suffix.clone()) {
                right[k].push(suffix);
            }
        }
        enrich(&mut right[k], &mut seen, cap, k + 1, sampler, &mut rng);
    }

    let mut left: Vec<Vec<Vec<usize>>> = vec![Vec::new(); d];
    left[0] = vec![Vec::new()];
    let mut cores: Vec<Option<Core>> = vec![None; d];
    let mut prev_err = f64::INFINITY;
    let mut sweeps = 0;
    let mut hit_limit = false;
    let mut previous: Option<TtTensor> = None;
    // Splits whose fiber matrix kept every column with σ_r/σ₁ above target.
    let mut saturated = vec![false; d];
    let mut tt;
    loop {
        sweeps += 1;
        // Left to right.
        for k in 0..d {
            let c = fiber_matrix(&mut oracle, &left[k], modes[k], &right[k])?;
            if k == d - 1 {
                cores[k] = Some(Core::new(left[k].len(), modes[k], 1, c.into_vec())?);
                break;
            }
            let (q, tail) = column_basis_with_tail(&c, cfg.max_rank)?;
            saturated[k] = tail > cfg.target_rel_accuracy;
            let rows = maxvol(&q, MAXVOL_TOL, 100 * q.cols())?;
            let p = interpolation_factor(&q, &rows)?;
            cores[k] = Some(Core::new(left[k].len(), modes[k], p.cols(), p.into_vec())?);
            let n = modes[k];
            left[k + 1] = rows.iter().map(|&row| [left[k][row / n].as_slice(), &[row % n]].concat()).collect();
        }
        // Right to left.
        for k in (0..d).rev() {
            let c = fiber_matrix(&mut oracle, &left[k], modes[k], &right[k])?;
            if k == 0 {
                cores[0] = Some(Core::new(1, modes[0], right[0].len(), c.into_vec())?);
                break;
            }
            let (l, n, r) = (left[k].len(), modes[k], right[k].len());
            // Columns of the right unfolding are (i, β) with i slowest.
            let ct = Matrix::from_fn(n * r, l, |col, a| c[(a * n + col / r, col % r)]);
            let q = column_basis(&ct, cfg.max_rank)?;
            let cols = maxvol(&q, MAXVOL_TOL, 100 * q.cols())?;
            let p = interpolation_factor(&q, &cols)?;
            let rk = p.cols();
            let data = (0..rk).flat_map(|a| (0..n * r).map(move |col| (a, col))).map(|(a, col)| p[(col, a)]).collect();
            cores[k] = Some(Core::new(rk, n, r, data)?);
            right[k - 1] = cols.iter().map(|&col| [&[col / r][..], right[k][col % r].as_slice()].concat()).collect();
        }
        tt = TtTensor::new(cores.iter().map(|c| c.clone().expect("all cores built")).collect())?;
        let err = validation.error(&tt);
        // The sample can miss error confined to a few fibers, so also require
        // the interpolant to stop moving once the index sets are enriched.
        let change = previous.as_ref().map_or(Ok(f64::INFINITY), |p| relative_change(&tt, p, sampler.measure()))?;
        let any_saturated = saturated.iter().any(|&v| v);
        if err <= cfg.target_rel_accuracy && change <= cfg.target_rel_accuracy && !any_saturated {
            break;
        }
        if sweeps >= cfg.max_sweeps || cfg.max_evals.is_some_and(|cap| oracle.calls >= cap) {
            hit_limit = true;
            break;
        }
        previous = Some(tt.clone());
        if any_saturated || err <= cfg.target_rel_accuracy || err > STAGNATION_RATIO * prev_err {
            let mut grew = false;
            for k in 0..d - 1 {
                if any_saturated && !saturated[k] && err <= STAGNATION_RATIO * prev_err {
                    continue;
                }
                let cap = (right[k].len() + cfg.rank_increment).min(cfg.max_rank).min(suffix_product(modes, k + 1)).min(prefix_product(modes, k + 1));
                let mut seen: HashSet<Vec<usize>> = right[k].iter().cloned().collect();
                let before = right[k].len();
                enrich(&mut right[k], &mut seen, cap, k + 1, sampler, &mut rng);
                grew |= right[k].len() > before;
            }
            if !grew && tt.max_rank() >= cfg.max_rank {
                hit_limit = true;
                break;
            }
        }
        prev_err = prev_err.min(err);
    }

    let fresh = Validation::draw(sampler, cfg.validation_sample_count, cfg.rng_seed, 2, &mut oracle)?;
    let est_rel_error = fresh.error(&tt);
    let converged = !hit_limit && est_rel_error <= cfg.target_rel_accuracy;
    Ok(CrossResult {
        tt: tt.round(cfg.target_rel_accuracy * ROUNDING_FRACTION),
        interpolant: tt,
        est_rel_error,
        evaluations: oracle.calls,
        sweeps,
        converged,
        left_pivots: left,
        right_pivots: right,
    })
}

/// Adds random distinct suffixes until `set` has `cap` entries.
/// Adds suffixes `i_{from..}` of points drawn from `sampler` until `set` has
/// `cap` entries. Suffixes whose leading index is not yet present are
/// preferred: columns sharing it are often nearly proportional.
fn enrich(set: &mut Vec<Vec<usize>>, seen: &mut HashSet<Vec<usize>>, cap: usize, from: usize, sampler: &dyn IndexSampler, rng: &mut ChaCha8Rng) {
    let mut leading: HashSet<usize> = set.iter().filter_map(|s| s.first().copied()).collect();
    let mut attempts = 0;
    while set.len() < cap && attempts < 100 * cap {
        attempts += 1;
        let s = sampler.sample(rng).0.split_off(from);
        let fresh_lead = s.first().is_none_or(|i| !leading.contains(i));
        if (fresh_lead || attempts > 50 * cap) && seen.insert(s.clone()) {
            leading.extend(s.first().copied());
            set.push(s);
        }
    }
}

/// Oracle values on `I × [n] × J` as an `(|I| n) × |J|` matrix, row `α n + i`.
fn fiber_matrix<F: Fn(&[usize]) -> f64 + Sync>(
    oracle: &mut Oracle<F>,
    left: &[Vec<usize>],
    n: usize,
    right: &[Vec<usize>],
) -> Result<Matrix> {
    let (l, r) = (left.len(), right.len());
    let points: Vec<Vec<usize>> = (0..l * n * r)
        .map(|lin| {
            let (row, b) = (lin / r, lin % r);
            let (a, i) = (row / n, row % n);
            [left[a].as_slice(), &[i], right[b].as_slice()].concat()
        })
        .collect();
    Ok(Matrix::from_vec(l * n, r, oracle.eval(&points)?)?)
}
