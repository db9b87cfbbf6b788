//! Gaussian densities `x ↦ exp(-½ xᵀΓx)` and the structure of their
//! precision matrices.
//!
//! Splitting `Γ` after row/column `k` gives the subdiagonal block
//! `A_k = Γ[k.., ..k]` of shape `(d-k) × k`; its singular values control the
//! TT ranks of the density. This module generates random precision matrices
//! with a prescribed subdiagonal spectrum, analyses spectra, and evaluates
//! the closed-form a-priori rank bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::ftt::PointSampler;
use crate::linalg::{self, cholesky, matmul, LinalgError, Matrix};

/// Alternation cap for [`generate_precision`].
pub const DEFAULT_GENERATOR_ITERS: usize = 500;
/// Spectrum deviation at which the generator stops alternating.
pub const DEFAULT_GENERATOR_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GaussError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precision matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("spectrum alternation did not converge in {iters} iterations (deviation {deviation:e})")]
    GeneratorNotConverged { iters: usize, deviation: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, GaussError>;

/// Symmetric positive definite precision matrix with its smallest eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    gamma: Matrix,
    lambda_min: f64,
}

impl PrecisionMatrix {
    pub fn new(gamma: Matrix) -> Result<Self> {
        let asym = gamma.asymmetry();
        if asym > linalg::SYMMETRY_TOL {
            return Err(LinalgError::Asymmetric(asym).into());
        }
        let gamma = gamma.symmetrized();
        let lambda_min = linalg::min_eigenvalue(&gamma)?;
        if lambda_min <= 0.0 {
            return Err(GaussError::NotPositiveDefinite(lambda_min));
        }
        Ok(Self { gamma, lambda_min })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diag(diag))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.gamma
    }

    pub fn dim(&self) -> usize {
        self.gamma.rows()
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// `Γ^{-1}`.
    pub fn covariance(&self) -> Result<Matrix> {
        Ok(linalg::inverse(&self.gamma)?.symmetrized())
    }

    /// `-½ xᵀΓx`, the log of the unnormalized density.
    pub fn density_log(&self, x: &[f64]) -> Result<f64> {
        density_log(self, x)
    }

    pub fn subdiagonal_blocks(&self) -> Result<SubdiagonalAnalysis> {
        subdiagonal_blocks(&self.gamma)
    }
}

/// `-½ xᵀΓx`.
pub fn density_log(gamma: &PrecisionMatrix, x: &[f64]) -> Result<f64> {
    if x.len() != gamma.dim() {
        return Err(GaussError::InvalidArgument(format!(
            "point of length {} for a {}-dimensional density",
            x.len(),
            gamma.dim()
        )));
    }
    Ok(quadratic_form(&gamma.gamma, x) * -0.5)
}

#[inline]
pub(crate) fn quadratic_form(m: &Matrix, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            acc += xi * linalg::dot(m.row(i), x);
        }
    }
    acc
}

/// Prescribed singular values for every subdiagonal block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumSpec {
    /// `l` singular values equal to `sigma`, the rest zero. `sigma = 0` gives a diagonal matrix.
    FixedRank { l: usize, sigma: f64 },
    /// `σ_i = α e^{-θ i}` for `i = 1, 2, …`.
    ExpDecay { alpha: f64, theta: f64 },
}

impl SpectrumSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SpectrumSpec::FixedRank { l, sigma } => {
                if l == 0 || !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(GaussError::InvalidArgument(format!("fixed-rank spec needs l ≥ 1, σ ≥ 0; got l = {l}, σ = {sigma}")));
                }
            }
            SpectrumSpec::ExpDecay { alpha, theta } => {
                if !(alpha > 0.0 && theta > 0.0 && alpha.is_finite() && theta.is_finite()) {
                    return Err(GaussError::InvalidArgument(format!("exp-decay spec needs α, θ > 0; got α = {alpha}, θ = {theta}")));
                }
            }
        }
        Ok(())
    }

    /// Target spectrum for a block whose smaller dimension is `len`; the
    /// prescribed sequence is cut at `len`.
    pub fn sequence(&self, len: usize) -> Vec<f64> {
        match *self {
            SpectrumSpec::FixedRank { l, sigma } => (0..len).map(|i| if i < l { sigma } else { 0.0 }).collect(),
            SpectrumSpec::ExpDecay { alpha, theta } => (1..=len).map(|i| alpha * (-theta * i as f64).exp()).collect(),
        }
    }

    /// Short text form used in result files, e.g. `fixed_rank(l=2,sigma=1)`.
    pub fn descriptor(&self) -> String {
        match *self {
            SpectrumSpec::FixedRank { l, sigma } => format!("fixed_rank(l={l},sigma={sigma})"),
            SpectrumSpec::ExpDecay { alpha, theta } => format!("exp_decay(alpha={alpha},theta={theta})"),
        }
    }
}

/// Singular spectra of the subdiagonal blocks `A_1, …, A_{d-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdiagonalAnalysis {
    /// `spectra[k - 1]` holds the non-increasing singular values of `A_k`.
    pub spectra: Vec<Vec<f64>>,
}

/// How a truncation tolerance is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ToleranceMode {
    /// Count `σ_i > tol · σ_1`.
    #[default]
    Relative,
    /// Count `σ_i > tol`.
    Absolute,
}

impl SubdiagonalAnalysis {
    pub fn splits(&self) -> usize {
        self.spectra.len()
    }

    /// Numerical rank of `A_k` (`k` is 1-based like the split index).
    pub fn numerical_rank(&self, k: usize, tol: f64, mode: ToleranceMode) -> usize {
        let s = &self.spectra[k - 1];
        let s1 = s.first().copied().unwrap_or(0.0);
        let cut = match mode {
            ToleranceMode::Relative => tol * s1,
            ToleranceMode::Absolute => tol,
        };
        s.iter().filter(|&&v| v > cut && v > 0.0).count()
    }

    pub fn ranks(&self, tol: f64, mode: ToleranceMode) -> Vec<usize> {
        (1..=self.splits()).map(|k| self.numerical_rank(k, tol, mode)).collect()
    }

    /// Numerical ranks for each tolerance in `tols`.
    pub fn rank_table(&self, tols: &[f64], mode: ToleranceMode) -> Vec<Vec<usize>> {
        tols.iter().map(|&t| self.ranks(t, mode)).collect()
    }

    pub fn max_rank(&self, tol: f64, mode: ToleranceMode) -> usize {
        self.ranks(tol, mode).into_iter().max().unwrap_or(0)
    }

    /// Largest deviation from the spectra prescribed by `spec`.
    pub fn deviation_from(&self, spec: &SpectrumSpec) -> f64 {
        self.spectra
            .iter()
            .map(|s| {
                let target = spec.sequence(s.len());
                s.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Spectra of `m[k.., ..k]` for `k = 1 … d-1`. Works for any square matrix,
/// so covariance matrices go through the same path.
pub fn subdiagonal_blocks(m: &Matrix) -> Result<SubdiagonalAnalysis> {
    let d = m.rows();
    if d < 2 || !m.is_square() {
        return Err(GaussError::InvalidArgument(format!("need a square matrix with d ≥ 2, got {:?}", m.shape())));
    }
    let spectra = (1..d)
        .map(|k| Ok(linalg::svd(&m.submatrix(k..d, 0..k))?.singular_values))
        .collect::<Result<Vec<_>>>()?;
    Ok(SubdiagonalAnalysis { spectra })
}

/// Options for [`generate_precision_with`].
#[derive(Debug, Clone, Copy)]
pub struct GeneratorOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self { max_iters: DEFAULT_GENERATOR_ITERS, tol: DEFAULT_GENERATOR_TOL }
    }
}

/// Random precision matrix whose subdiagonal blocks all carry the spectrum
/// of `spec`, shifted so that its smallest eigenvalue is `lambda_min_target`.
pub fn generate_precision(d: usize, spec: &SpectrumSpec, lambda_min_target: f64, seed: u64) -> Result<PrecisionMatrix> {
    generate_precision_with(d, spec, lambda_min_target, seed, GeneratorOptions::default())
}

/// Starts from `M Mᵀ` with `M` uniform in `[-1, 1]`, then cycles
/// `k = 1 … d-1`, replacing the singular values of `A_k` (keeping its
/// singular vectors) and writing it back into both triangles. Stops once
/// every block spectrum is within `opts.tol` of the target. Finally the
/// diagonal is shifted, which leaves every `A_k` untouched.
pub fn generate_precision_with(
    d: usize,
    spec: &SpectrumSpec,
    lambda_min_target: f64,
    seed: u64,
    opts: GeneratorOptions,
) -> Result<PrecisionMatrix> {
    if d < 2 {
        return Err(GaussError::InvalidArgument(format!("dimension must be ≥ 2, got {d}")));
    }
    if !(lambda_min_target > 0.0) {
        return Err(GaussError::InvalidArgument(format!("target smallest eigenvalue must be positive, got {lambda_min_target}")));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..=1.0));
    let mut g = matmul(&m, &m.transpose())?.symmetrized();

    // Plain cyclic projection stalls near intersections where blocks are
    // rank deficient, so full sweeps are wrapped in Anderson mixing.
    let lower: Vec<(usize, usize)> = (1..d).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
    let mut x: Vec<f64> = lower.iter().map(|&(i, j)| g[(i, j)]).collect();
    let mut hist_g: Vec<Vec<f64>> = Vec::new();
    let mut hist_f: Vec<Vec<f64>> = Vec::new();
    let mut deviation = f64::INFINITY;
    let mut converged = false;
    // Deviation at the last halving, used to detect stalls.
    let (mut mark, mut mark_iter) = (f64::INFINITY, 0);
    // Set once Anderson stalls; from then on Newton steps are tried first.
    let mut newton = false;
    for iter in 0..opts.max_iters {
        for (&(i, j), &v) in lower.iter().zip(&x) {
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
        projection_sweep(&mut g, spec)?;
        deviation = subdiagonal_blocks(&g)?.deviation_from(spec);
        if deviation <= opts.tol {
            converged = true;
            break;
        }
        let gx: Vec<f64> = lower.iter().map(|&(i, j)| g[(i, j)]).collect();
        let f: Vec<f64> = gx.iter().zip(&x).map(|(a, b)| a - b).collect();
        if deviation < 0.5 * mark {
            mark = deviation;
            mark_iter = iter;
        }
        newton |= deviation < NEWTON_START && iter - mark_iter >= NEWTON_PATIENCE;
        if newton {
            if let Some(step) = newton_step(&mut g, &lower, &x, &f, spec)? {
                x = step;
                hist_g.clear();
                hist_f.clear();
                continue;
            }
        }
        hist_g.push(gx.clone());
        hist_f.push(f.clone());
        if hist_g.len() > ANDERSON_DEPTH + 1 {
            hist_g.remove(0);
            hist_f.remove(0);
        }
        x = match anderson_step(&hist_g, &hist_f, &f) {
            Some(mixed) => mixed,
            None => {
                hist_g.drain(..hist_g.len() - 1);
                hist_f.drain(..hist_f.len() - 1);
                gx
            }
        };
    }
    if !converged {
        return Err(GaussError::GeneratorNotConverged { iters: opts.max_iters, deviation });
    }
    let current = linalg::min_eigenvalue(&g)?;
    g.shift_diagonal(lambda_min_target - current);
    PrecisionMatrix::new(g)
}

const ANDERSON_DEPTH: usize = 16;

/// Sweep deviation below which a stalled iteration switches to Newton steps.
/// Stalls come from blocks whose constraints force entries to zero, where
/// the fixed point is degenerate and plain sweeps converge sublinearly.
const NEWTON_START: f64 = 1e-1;
/// Sweeps without the deviation halving before a Newton step is tried.
const NEWTON_PATIENCE: usize = 20;

fn sweep_map(g: &mut Matrix, lower: &[(usize, usize)], x: &[f64], spec: &SpectrumSpec) -> Result<(Vec<f64>, f64)> {
    for (&(i, j), &v) in lower.iter().zip(x) {
        g[(i, j)] = v;
        g[(j, i)] = v;
    }
    projection_sweep(g, spec)?;
    let deviation = subdiagonal_blocks(g)?.deviation_from(spec);
    Ok((lower.iter().map(|&(i, j)| g[(i, j)]).collect(), deviation))
}

/// Minimum-norm Gauss-Newton step for the fixed point `G(x) = x` of one
/// sweep, with a central-difference Jacobian. The feasible set is a manifold,
/// so `J - I` is singular and small singular values are cut. Returns the new
/// point only when its sweep deviation beats `x`'s.
fn newton_step(g: &mut Matrix, lower: &[(usize, usize)], x: &[f64], f: &[f64], spec: &SpectrumSpec) -> Result<Option<Vec<f64>>> {
    let n = x.len();
    let current = sweep_map(g, lower, x, spec)?.1;
    let mut jac = Matrix::zeros(n, n);
    for c in 0..n {
        let h = 1e-5 * x[c].abs().max(1.0);
        let mut xp = x.to_vec();
        xp[c] += h;
        let (gp, _) = sweep_map(g, lower, &xp, spec)?;
        xp[c] -= 2.0 * h;
        let (gm, _) = sweep_map(g, lower, &xp, spec)?;
        for r in 0..n {
            jac[(r, c)] = (gp[r] - gm[r]) / (2.0 * h) - if r == c { 1.0 } else { 0.0 };
        }
    }
    let s = linalg::svd(&jac)?;
    let cut = 1e-8 * s.singular_values[0];
    let mut delta = vec![0.0; n];
    for (k, &sv) in s.singular_values.iter().enumerate() {
        if sv <= cut {
            continue;
        }
        let coeff = -(0..n).map(|r| s.u[(r, k)] * f[r]).sum::<f64>() / sv;
        for (i, d) in delta.iter_mut().enumerate() {
            *d += coeff * s.vt[(k, i)];
        }
    }
    let candidate: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
    let (_, dev) = sweep_map(g, lower, &candidate, spec)?;
    Ok((dev < current && candidate.iter().all(|v| v.is_finite())).then_some(candidate))
}

/// One pass `k = 1 … d-1` replacing each block spectrum by the target.
fn projection_sweep(g: &mut Matrix, spec: &SpectrumSpec) -> Result<()> {
    let d = g.rows();
    for k in 1..d {
        let s = linalg::svd(&g.submatrix(k..d, 0..k))?;
        let target = spec.sequence(s.rank());
        let projected = linalg::SvdResult { singular_values: target, ..s }.reconstruct();
        for i in 0..d - k {
            for j in 0..k {
                g[(k + i, j)] = projected[(i, j)];
                g[(j, k + i)] = projected[(i, j)];
            }
        }
    }
    Ok(())
}

/// Type-II Anderson update from sweep outputs `hist_g` and residuals
/// `hist_f`. `None` when the residual differences are numerically dependent.
fn anderson_step(hist_g: &[Vec<f64>], hist_f: &[Vec<f64>], f: &[f64]) -> Option<Vec<f64>> {
    let n = f.len();
    // With fewer unknowns than history columns only the newest `n` differences are independent.
    let skip = hist_f.len().saturating_sub(n + 1);
    let (hist_g, hist_f) = (&hist_g[skip..], &hist_f[skip..]);
    let m = hist_f.len().checked_sub(1).filter(|&m| m > 0)?;
    let df = Matrix::from_fn(n, m, |r, c| hist_f[c + 1][r] - hist_f[c][r]);
    let (q, r) = linalg::qr(&df);
    let diag_max = (0..m).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if diag_max == 0.0 || (0..m).any(|i| r[(i, i)].abs() <= 1e-12 * diag_max) {
        return None;
    }
    let rhs: Vec<f64> = (0..m).map(|c| linalg::dot(&q.column(c), f)).collect();
    let gamma = linalg::solve_upper_transposed(&r.transpose(), &rhs);
    let last = &hist_g[m];
    let mixed: Vec<f64> = (0..n)
        .map(|row| last[row] - (0..m).map(|c| (hist_g[c + 1][row] - hist_g[c][row]) * gamma[c]).sum::<f64>())
        .collect();
    mixed.iter().all(|v| v.is_finite()).then_some(mixed)
}

/// Cutoff half-width `a = √((2/λ_min) ln(√(2d)/ε))`: the box `[-a, a]^d`
/// then loses at most a relative `L²` mass of order `ε`.
pub fn cutoff_radius(lambda_min: f64, d: usize, eps: f64) -> Result<f64> {
    if !(lambda_min > 0.0) || d < 2 || !(eps > 0.0) {
        return Err(GaussError::InvalidArgument(format!("cutoff radius needs λ_min > 0, d ≥ 2, ε > 0; got {lambda_min}, {d}, {eps}")));
    }
    let log_arg = (2.0 * d as f64).sqrt() / eps;
    if log_arg <= 1.0 {
        return Err(GaussError::InvalidArgument(format!("ε = {eps} is not below √(2d) = {}", (2.0 * d as f64).sqrt())));
    }
    Ok((2.0 / lambda_min * log_arg.ln()).sqrt())
}

fn check_bound_args(lambda_min: f64, d: usize, eps: f64) -> Result<()> {
    if d < 2 || !(lambda_min > 0.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(GaussError::InvalidArgument(format!("rank bounds need d ≥ 2, λ_min > 0, 0 < ε < 1; got {d}, {lambda_min}, {eps}")));
    }
    Ok(())
}

/// Rank bound for subdiagonal blocks of rank `≤ l` with singular values `≤ σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowRankBound {
    /// `((1 + 7σ/λ) ln(√8 d/ε) + ln(e^{3/2} l/2))^l`
    pub tight: f64,
    /// `((1 + 7σ/λ) ln(7 l d/ε))^l`
    pub simplified: f64,
}

pub fn bound_low_rank(l: usize, sigma: f64, lambda_min: f64, d: usize, eps: f64) -> Result<LowRankBound> {
    check_bound_args(lambda_min, d, eps)?;
    if l == 0 || !(sigma >= 0.0) {
        return Err(GaussError::InvalidArgument(format!("need l ≥ 1 and σ ≥ 0, got {l}, {sigma}")));
    }
    let (lf, df) = (l as f64, d as f64);
    let growth = 1.0 + 7.0 * sigma / lambda_min;
    let tight = (growth * (8f64.sqrt() * df / eps).ln() + (1.5f64.exp() * lf / 2.0).ln()).powi(l as i32);
    let simplified = (growth * (7.0 * lf * df / eps).ln()).powi(l as i32);
    Ok(LowRankBound { tight, simplified })
}

/// Rank bound for exponentially decaying subdiagonal spectra `σ_i ≤ α e^{-θ i}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpDecayBound {
    /// `exp(3α/(λθ)) · (3 ln(C d/ε))^{(2/θ) ln(C d/ε)}`; may be `+∞` when it overflows.
    pub bound: f64,
    /// Natural log of `bound`, always finite.
    pub log_bound: f64,
    /// Same quantity through the `(C d/ε)^{(2/θ) ln(3 ln(C d/ε))}` form, in log space.
    pub log_bound_alt: f64,
    /// `max{√8, 5/θ, (e^θ/(1+e^θ)) 4α/λ}`
    pub c: f64,
    /// Truncation count from [`truncation_count`] at the cutoff radius for `(λ, d, ε)`.
    pub l_star: f64,
}

pub fn bound_exp_decay(alpha: f64, theta: f64, lambda_min: f64, d: usize, eps: f64) -> Result<ExpDecayBound> {
    check_bound_args(lambda_min, d, eps)?;
    SpectrumSpec::ExpDecay { alpha, theta }.validate()?;
    let logistic = 1.0 / (1.0 + (-theta).exp());
    let c = 8f64.sqrt().max(5.0 / theta).max(logistic * 4.0 * alpha / lambda_min);
    let big_l = (c * d as f64 / eps).ln();
    let prefactor = 3.0 * alpha / (lambda_min * theta);
    let log_bound = prefactor + (2.0 / theta) * big_l * (3.0 * big_l).ln();
    let log_bound_alt = prefactor + (2.0 / theta) * (3.0 * big_l).ln() * big_l;
    let a = cutoff_radius(lambda_min, d, eps)?;
    Ok(ExpDecayBound { bound: log_bound.exp(), log_bound, log_bound_alt, c, l_star: truncation_count(alpha, theta, a, eps)? })
}

/// Number of leading singular values that must be kept so that dropping the
/// rest of an `α e^{-θ i}` spectrum perturbs the density on `[-a, a]^d` by
/// at most a relative `ε`: `(1/θ) ln((e^θ/(1+e^θ)) · 3αa²/(2ε))`.
pub fn truncation_count(alpha: f64, theta: f64, a: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) || !(a > 0.0) {
        return Err(GaussError::InvalidArgument(format!("need 0 < ε < 1 and a > 0, got {eps}, {a}")));
    }
    SpectrumSpec::ExpDecay { alpha, theta }.validate()?;
    let logistic = 1.0 / (1.0 + (-theta).exp());
    Ok((logistic * 3.0 * alpha * a * a / (2.0 * eps)).ln() / theta)
}

/// Sup-norm error bound for interpolating `x ↦ e^{-σ x}` on `[-a², a²]` at
/// `r` Chebyshev points: `(σa²)^r e^{σa²} / (r! 2^{r-1})`. Beyond `r = 170`
/// the factorial overflows and `(σ e a²/(2r))^r e^{σa²}` is returned instead.
pub fn chebyshev_interp_error_bound(sigma_i: f64, a: f64, r: usize) -> f64 {
    assert!(r >= 1, "interpolation order must be at least 1");
    let x = sigma_i * a * a;
    if x == 0.0 {
        return 0.0;
    }
    if r <= 170 {
        let log_fact: f64 = (2..=r).map(|k| (k as f64).ln()).sum();
        (r as f64 * x.ln() + x - log_fact - (r as f64 - 1.0) * std::f64::consts::LN_2).exp()
    } else {
        let rf = r as f64;
        (rf * (x * std::f64::consts::E / (2.0 * rf)).ln() + x).exp()
    }
}

/// Draws from `N(0, Γ^{-1})` via the Cholesky factor of `Γ`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    precision: PrecisionMatrix,
    chol: Matrix,
}

impl GaussianSampler {
    pub fn new(precision: &PrecisionMatrix) -> Result<Self> {
        Ok(Self { precision: precision.clone(), chol: cholesky(precision.matrix())? })
    }
}

impl PointSampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.precision.dim()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        linalg::solve_upper_transposed(&self.chol, &z)
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        quadratic_form(self.precision.matrix(), x) * -0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftt::make_grid;

    fn tridiagonal(d: usize, diag: f64, off: &[f64]) -> PrecisionMatrix {
        let mut m = Matrix::from_diag(&vec![diag; d]);
        for k in 0..d - 1 {
            m[(k + 1, k)] = off[k];
            m[(k, k + 1)] = off[k];
        }
        PrecisionMatrix::new(m).unwrap()
    }

    #[test]
    fn density_log_examples() {
        let g = tridiagonal(3, 2.0, &[0.5, -0.3]);
        assert_eq!(density_log(&g, &[0.0; 3]).unwrap(), 0.0);
        let diag = PrecisionMatrix::diagonal(&[1.0, 2.0, 3.0]).unwrap();
        let x = [0.5, -1.0, 2.0];
        let expect = -0.5 * (0.25 + 2.0 + 12.0);
        assert!((density_log(&diag, &x).unwrap() - expect).abs() < 1e-15);
        let xm = Matrix::from_vec(3, 1, x.to_vec()).unwrap();
        let quad = matmul(&matmul(&xm.transpose(), g.matrix()).unwrap(), &xm).unwrap()[(0, 0)];
        assert!((density_log(&g, &x).unwrap() + 0.5 * quad).abs() < 1e-12);
        assert!(density_log(&g, &[1.0]).is_err());
    }

    #[test]
    fn precision_matrix_validation() {
        assert!(PrecisionMatrix::diagonal(&[1.0, -1.0]).is_err());
        let asym = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(PrecisionMatrix::new(asym).is_err());
        let g = PrecisionMatrix::diagonal(&[0.5, 2.0]).unwrap();
        assert_eq!(g.lambda_min(), 0.5);
    }

    #[test]
    fn subdiagonal_spectra_examples() {
        let diag = PrecisionMatrix::diagonal(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let sa = diag.subdiagonal_blocks().unwrap();
        assert!(sa.spectra.iter().flatten().all(|&s| s == 0.0));
        assert_eq!(sa.max_rank(1e-6, ToleranceMode::Relative), 0);

        let off = [0.7, -0.2, 0.45, 0.1];
        let tri = tridiagonal(5, 3.0, &off);
        let sa = tri.subdiagonal_blocks().unwrap();
        for (k, s) in sa.spectra.iter().enumerate() {
            assert!((s[0] - off[k].abs()).abs() < 1e-15);
            assert!(s[1..].iter().all(|&v| v < 1e-15));
            assert_eq!(sa.numerical_rank(k + 1, 1e-10, ToleranceMode::Relative), 1);
        }
        assert_eq!(sa.ranks(0.3, ToleranceMode::Absolute), vec![1, 0, 1, 0]);
        assert_eq!(sa.rank_table(&[1e-10, 0.3], ToleranceMode::Absolute).len(), 2);
    }

    #[test]
    fn generator_two_by_two() {
        let spec = SpectrumSpec::FixedRank { l: 1, sigma: 1.0 };
        let g = generate_precision(2, &spec, 0.5, 3).unwrap();
        assert!((g.matrix()[(1, 0)].abs() - 1.0).abs() < 1e-12);
        assert_eq!(g.matrix()[(1, 0)], g.matrix()[(0, 1)]);
        assert!((g.lambda_min() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn generator_zero_coupling_is_diagonal() {
        let spec = SpectrumSpec::FixedRank { l: 2, sigma: 0.0 };
        let g = generate_precision(6, &spec, 1.0, 1).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert!(g.matrix()[(i, j)].abs() < 1e-14);
                }
            }
        }
        assert!((g.lambda_min() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generator_fixed_rank_round_trip() {
        let spec = SpectrumSpec::FixedRank { l: 2, sigma: 1.0 };
        let g = generate_precision(15, &spec, 0.5, 42).unwrap();
        let sa = g.subdiagonal_blocks().unwrap();
        assert!(sa.deviation_from(&spec) <= 1e-6);
        for s in &sa.spectra {
            assert!((s[0] - 1.0).abs() < 1e-6);
            if s.len() > 1 {
                assert!((s[1] - 1.0).abs() < 1e-6);
            }
            assert!(s.iter().skip(2).all(|&v| v < 1e-6));
        }
        assert!((g.lambda_min() - 0.5).abs() < 1e-8);
        assert_eq!(g.matrix().asymmetry(), 0.0);
        let again = generate_precision(15, &spec, 0.5, 42).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn generator_degenerate_fixed_rank() {
        // Blocks narrower than l force whole rows of Γ to zero; plain sweeps stall here.
        for (d, l) in [(4, 2), (6, 3), (8, 3)] {
            let spec = SpectrumSpec::FixedRank { l, sigma: 1.0 };
            for seed in 0..4 {
                let g = generate_precision(d, &spec, 0.5, seed).unwrap();
                assert!(g.subdiagonal_blocks().unwrap().deviation_from(&spec) <= 1e-6, "d={d} l={l} seed={seed}");
            }
        }
    }

    #[test]
    fn generator_exp_decay_spectra() {
        let spec = SpectrumSpec::ExpDecay { alpha: 1.0, theta: 1.0 };
        for seed in 0..3 {
            let g = generate_precision(12, &spec, 0.5, seed).unwrap();
            assert!(g.subdiagonal_blocks().unwrap().deviation_from(&spec) <= 1e-6);
            let (vals, _) = linalg::sym_eig(g.matrix()).unwrap();
            assert!(vals.iter().all(|&v| v >= 0.5 - 1e-8));
        }
    }

    #[test]
    fn generator_rejects_bad_input() {
        let spec = SpectrumSpec::FixedRank { l: 1, sigma: 1.0 };
        assert!(generate_precision(1, &spec, 0.5, 0).is_err());
        assert!(generate_precision(3, &spec, 0.0, 0).is_err());
        assert!(generate_precision(3, &SpectrumSpec::ExpDecay { alpha: -1.0, theta: 1.0 }, 0.5, 0).is_err());
        let tight = GeneratorOptions { max_iters: 1, tol: 0.0 };
        assert!(matches!(
            generate_precision_with(8, &SpectrumSpec::FixedRank { l: 2, sigma: 1.0 }, 0.5, 0, tight),
            Err(GaussError::GeneratorNotConverged { iters: 1, .. })
        ));
    }

    #[test]
    fn cutoff_radius_examples() {
        assert!((cutoff_radius(0.5, 15, 1e-4).unwrap() - 6.606_342_123_386_363).abs() < 1e-12);
        assert!((cutoff_radius(2.0, 2, 1.0).unwrap() - 0.832_554_611_157_697_8).abs() < 1e-12);
        let a1 = cutoff_radius(1.0, 7, 1e-3).unwrap();
        let a4 = cutoff_radius(0.25, 7, 1e-3).unwrap();
        assert!((a4 - 2.0 * a1).abs() < 1e-12);
        assert!(cutoff_radius(1.0, 2, 2.0).is_err());
        assert!(cutoff_radius(1.0, 1, 0.1).is_err());
    }

    #[test]
    fn low_rank_bound_examples() {
        let b = bound_low_rank(2, 1.0, 0.5, 15, 1e-4).unwrap();
        assert!((b.simplified - 47_681.840_123_918_95).abs() < 1e-6);
        assert!((b.tight - 38_365.711_170_787_82).abs() < 1e-6);
        assert!(b.tight <= b.simplified);
        let half = bound_low_rank(2, 1.0, 0.5, 15, 0.5e-4).unwrap();
        assert!(half.tight > b.tight && half.simplified > b.simplified);
        let z = bound_low_rank(1, 0.0, 0.5, 10, 1e-3).unwrap();
        let expect = (8f64.sqrt() * 10.0 / 1e-3).ln() + (1.5f64.exp() / 2.0).ln();
        assert!((z.tight - expect).abs() < 1e-12);
        let z2 = bound_low_rank(1, 0.0, 0.5, 10, 1e-6).unwrap();
        assert!((z2.tight - z.tight - 1000f64.ln()).abs() < 1e-12);
        assert!(bound_low_rank(1, 1.0, 0.5, 10, 1.5).is_err());
    }

    #[test]
    fn exp_decay_bound_examples() {
        let b = bound_exp_decay(1.0, 1.0, 0.5, 30, 1e-4).unwrap();
        assert!((b.c - 5.848_468_629_040_039).abs() < 1e-12);
        assert!((b.log_bound - 114.243_852_106_357_99).abs() < 1e-9);
        assert!((b.bound / 4.125_480_713_693_558e49 - 1.0).abs() < 1e-9);
        assert!((b.log_bound - b.log_bound_alt).abs() <= 1e-9 * b.log_bound.abs());
        assert!((b.l_star - 13.109_873_850_848_525).abs() < 1e-9);

        let steep = bound_exp_decay(1.0, 1e6, 0.5, 30, 1e-4).unwrap();
        assert!(steep.log_bound < 1e-3);
        assert!((steep.c - 8.0).abs() < 1e-9);
    }

    #[test]
    fn truncation_count_examples() {
        let l = truncation_count(1.0, 2.0, 7.0, 1e-2).unwrap();
        assert!((l - 4.387_763_790_581_955).abs() < 1e-12);
        let theta: f64 = 1.3;
        let a = truncation_count(1.0, theta, 5.0, 1e-3).unwrap();
        let b = truncation_count(1.0, theta, 5.0, 1e-3 / theta.exp()).unwrap();
        assert!((b - a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_count_controls_dropped_terms() {
        // d = 4, split k = 2: A_2 is 2 × 2 with σ = (e^{-3}, e^{-6}).
        let (alpha, theta) = (1.0, 3.0);
        let spec = SpectrumSpec::ExpDecay { alpha, theta };
        let g = generate_precision(4, &spec, 1.0, 5).unwrap();
        let (a, eps) = (3.0, 0.1);
        let keep = truncation_count(alpha, theta, a, eps).unwrap().floor() as usize;
        assert_eq!(keep, 1);
        let block = g.matrix().submatrix(2..4, 0..2);
        let s = linalg::svd(&block).unwrap().truncate(keep).reconstruct();
        let mut trunc = g.matrix().clone();
        for i in 0..2 {
            for j in 0..2 {
                trunc[(2 + i, j)] = s[(i, j)];
                trunc[(j, 2 + i)] = s[(i, j)];
            }
        }
        let grid = make_grid(1, a, 20).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        let n = grid.n();
        for lin in 0..n.pow(4) {
            let idx = [lin % n, (lin / n) % n, (lin / n / n) % n, lin / n / n / n];
            let x: Vec<f64> = idx.iter().map(|&i| grid.nodes()[i]).collect();
            let w: f64 = idx.iter().map(|&i| grid.weights()[i]).product();
            let f = (-0.5 * quadratic_form(g.matrix(), &x)).exp();
            let ft = (-0.5 * quadratic_form(&trunc, &x)).exp();
            num += w * (f - ft) * (f - ft);
            den += w * f * f;
        }
        assert!((num / den).sqrt() <= eps);
    }

    #[test]
    fn chebyshev_bound_examples() {
        assert_eq!(chebyshev_interp_error_bound(0.0, 7.0, 3), 0.0);
        let v = chebyshev_interp_error_bound(1.0, 1.0, 3);
        assert!((v - std::f64::consts::E / 24.0).abs() < 1e-15);
        let x: f64 = 2.5;
        let seq: Vec<f64> = (1..40).map(|r| chebyshev_interp_error_bound(x, 1.0, r)).collect();
        for r in 3..seq.len() {
            assert!(seq[r] < seq[r - 1], "not decreasing at r = {}", r + 1);
        }
        let big = chebyshev_interp_error_bound(1.0, 1.0, 400);
        assert!(big.is_finite() && big >= 0.0);
    }

    #[test]
    fn sampler_matches_covariance() {
        let g = tridiagonal(3, 2.0, &[0.8, -0.5]);
        let sampler = GaussianSampler::new(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let mut cov = Matrix::zeros(3, 3);
        for _ in 0..n {
            let x = sampler.sample(&mut rng);
            for i in 0..3 {
                for j in 0..3 {
                    cov[(i, j)] += x[i] * x[j] / n as f64;
                }
            }
        }
        let exact = g.covariance().unwrap();
        assert!(cov.sub(&exact).unwrap().max_abs() < 0.02);
    }

    #[test]
    fn covariance_has_same_block_ranks() {
        let g = tridiagonal(6, 3.0, &[0.7, -0.4, 0.9, 0.3, -0.6]);
        let cov = g.covariance().unwrap();
        let sa = subdiagonal_blocks(&cov).unwrap();
        assert_eq!(sa.ranks(1e-6, ToleranceMode::Relative), vec![1; 5]);
    }
}
