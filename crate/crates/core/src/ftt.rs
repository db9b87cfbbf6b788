//! Functional TT: a TT of function values on a tensor Gauss–Legendre grid,
//! read as the tensor-product Lagrange interpolant through those nodes.
//!
//! With per-axis quadrature weights `w`, the interpolant's `L²([-a,a]^d)`
//! norm is exactly the Frobenius norm of `T ∘ √W`, because the product
//! of two degree-`n-1` polynomials is integrated exactly by the `n`-point
//! rule. Truncation therefore happens on the weight-scaled tensor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::tt::{self, TtError, TtTensor};

/// Newton iteration cap for each Legendre root.
pub const NEWTON_MAX_ITERS: usize = 100;
/// Default half-width of the approximation box.
pub const DEFAULT_HALF_WIDTH: f64 = 7.0;
/// Default sample count for the importance-sampled error.
pub const DEFAULT_ERROR_SAMPLES: usize = 10_000;

const SAMPLE_BATCH: usize = 1024;

#[derive(Debug, Error)]
pub enum FttError {
    #[error("invalid grid parameters: {0}")]
    InvalidGrid(String),
    #[error("Newton iteration for Legendre root {index} of P_{n} did not converge in {cap} steps")]
    NewtonDiverged { index: usize, n: usize, cap: usize },
    #[error("tensor does not match grid: {0}")]
    GridMismatch(String),
    #[error("all {0} proposal samples fell outside the domain")]
    AllSamplesRejected(usize),
    #[error(transparent)]
    Tt(#[from] TtError),
}

pub type Result<T> = std::result::Result<T, FttError>;

/// Gauss–Legendre nodes and weights on `[-a, a]`, shared by all `d` axes.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationGrid {
    d: usize,
    a: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
}

impl InterpolationGrid {
    pub fn new(d: usize, a: f64, n: usize) -> Result<Self> {
        make_grid(d, a, n)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn half_width(&self) -> f64 {
        self.a
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mode_sizes(&self) -> Vec<usize> {
        vec![self.n(); self.d]
    }

    /// Grid point for a multi-index.
    pub fn point(&self, index: &[usize]) -> Vec<f64> {
        index.iter().map(|&i| self.nodes[i]).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= self.a)
    }

    /// Values of the `n` Lagrange basis polynomials at `x`.
    pub fn lagrange_basis(&self, x: f64) -> Vec<f64> {
        if let Some(hit) = self.nodes.iter().position(|&t| t == x) {
            let mut e = vec![0.0; self.n()];
            e[hit] = 1.0;
            return e;
        }
        let terms: Vec<f64> = self.nodes.iter().zip(&self.bary).map(|(&t, &b)| b / (x - t)).collect();
        let denom: f64 = terms.iter().sum();
        terms.into_iter().map(|v| v / denom).collect()
    }

    /// `Σ_i w_i g(x_i)` along one axis.
    pub fn integrate_1d(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * g(x)).sum()
    }

    fn sqrt_weights(&self) -> Vec<Vec<f64>> {
        vec![self.weights.iter().map(|w| w.sqrt()).collect(); self.d]
    }

    fn inv_sqrt_weights(&self) -> Vec<Vec<f64>> {
        vec![self.weights.iter().map(|w| 1.0 / w.sqrt()).collect(); self.d]
    }
}

/// Gauss–Legendre grid: roots of `P_n` by Newton's method from Chebyshev-angle
/// guesses, scaled from `[-1, 1]` to `[-a, a]`.
pub fn make_grid(d: usize, a: f64, n: usize) -> Result<InterpolationGrid> {
    if n == 0 || d == 0 {
        return Err(FttError::InvalidGrid(format!("need n ≥ 1 and d ≥ 1, got n = {n}, d = {d}")));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(FttError::InvalidGrid(format!("half-width must be positive, got {a}")));
    }
    let (xi, w) = gauss_legendre(n)?;
    // Barycentric weights for Legendre points: (-1)^i sqrt((1 - x_i²) w_i).
    let bary = xi
        .iter()
        .zip(&w)
        .enumerate()
        .map(|(i, (&x, &wi))| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * ((1.0 - x * x) * wi).sqrt()
        })
        .collect();
    Ok(InterpolationGrid {
        d,
        a,
        nodes: xi.iter().map(|x| a * x).collect(),
        weights: w.iter().map(|v| a * v).collect(),
        bary,
    })
}

/// Reference nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        let mut dp = 0.0;
        for _ in 0..NEWTON_MAX_ITERS {
            let (p, deriv) = legendre_with_derivative(n, x);
            dp = deriv;
            let step = p / deriv;
            x -= step;
            if step.abs() <= 1e-15 * x.abs().max(1.0) {
                converged = true;
                dp = legendre_with_derivative(n, x).1;
                break;
            }
        }
        if !converged {
            return Err(FttError::NewtonDiverged { index: i, n, cap: NEWTON_MAX_ITERS });
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Guesses run from the right end; mirror into ascending order.
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let deriv = if (1.0 - x * x).abs() < 1e-300 {
        // Endpoint limit, never reached by interior roots.
        0.5 * nf * (nf + 1.0) * x.signum().powi(n as i32 + 1)
    } else {
        nf * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, deriv)
}

/// Point evaluation of an interpolant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// Set when the point lies outside `[-a, a]^d`; the value is a polynomial extrapolation.
    pub extrapolated: bool,
}

/// A TT of node values together with its grid.
#[derive(Debug, Clone)]
pub struct FttApprox {
    grid: InterpolationGrid,
    values: TtTensor,
    weighted: TtTensor,
}

impl FttApprox {
    pub fn new(grid: InterpolationGrid, values: TtTensor) -> Result<Self> {
        if values.mode_sizes() != grid.mode_sizes() {
            return Err(FttError::GridMismatch(format!(
                "tensor modes {:?}, grid {:?}",
                values.mode_sizes(),
                grid.mode_sizes()
            )));
        }
        let weighted = values.scale_modes(&grid.sqrt_weights())?;
        Ok(Self { grid, values, weighted })
    }

    /// Samples `f` on every grid node and compresses with TT-SVD at relative
    /// accuracy `eps`. Only usable while `n^d` fits the dense cap.
    pub fn from_dense_samples(grid: InterpolationGrid, f: impl Fn(&[f64]) -> f64, eps: f64) -> Result<Self> {
        let dense = tt::DenseTensor::from_fn(&grid.mode_sizes(), |idx| f(&grid.point(idx)));
        let values = tt::tt_svd_relative(&dense, eps)?;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &InterpolationGrid {
        &self.grid
    }

    pub fn values(&self) -> &TtTensor {
        &self.values
    }

    /// `T ∘ √W`.
    pub fn weighted_values(&self) -> &TtTensor {
        &self.weighted
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.values.ranks()
    }

    pub fn max_rank(&self) -> usize {
        self.values.max_rank()
    }

    pub fn eval(&self, x: &[f64]) -> Evaluation {
        assert_eq!(x.len(), self.grid.d, "point dimension");
        let mut v = crate::linalg::Matrix::identity(1);
        for (core, &xk) in self.values.cores().iter().zip(x) {
            let basis = self.grid.lagrange_basis(xk);
            v = crate::linalg::matmul(&v, &core.contract_mode(&basis)).expect("conformant");
        }
        Evaluation { value: v[(0, 0)], extrapolated: !self.grid.contains(x) }
    }

    pub fn weighted_l2_norm(&self) -> f64 {
        self.weighted.frobenius_norm()
    }

    /// Rounds `T ∘ √W` to relative accuracy `eps` and scales back.
    /// Returns the truncated approximation and its ranks `(r_0, …, r_d)`.
    pub fn truncate_to_accuracy(&self, eps: f64) -> Result<(FttApprox, Vec<usize>)> {
        let rounded = self.weighted.round(eps);
        let values = rounded.scale_modes(&self.grid.inv_sqrt_weights())?;
        let ranks = rounded.ranks();
        Ok((FttApprox { grid: self.grid.clone(), values, weighted: rounded }, ranks))
    }

    /// `‖p - q‖_{L²} / ‖p‖_{L²}` for two interpolants on the same grid.
    pub fn relative_l2_distance(&self, other: &FttApprox) -> Result<f64> {
        if self.grid != other.grid {
            return Err(FttError::GridMismatch("different grids".into()));
        }
        Ok(tt::distance(&self.weighted, &other.weighted)? / self.weighted.frobenius_norm())
    }
}

/// A proposal distribution for importance sampling.
pub trait PointSampler: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Log of the (unnormalized) proposal density.
    fn log_density(&self, x: &[f64]) -> f64;
}

/// Self-normalized importance-sampling estimate of
/// `‖f - p‖_{L²(Q)} / ‖f‖_{L²(Q)}`. Proposals outside `Q` are rejected, which
/// restricts the proposal to `Q`. Batches of samples draw from independent
/// ChaCha streams derived from `seed`, so the result does not depend on thread
/// scheduling.
pub fn sampled_relative_error(
    fa: &FttApprox,
    f_exact: &(dyn Fn(&[f64]) -> f64 + Sync),
    sampler: &dyn PointSampler,
    m: usize,
    seed: u64,
) -> Result<f64> {
    if m == 0 {
        return Err(FttError::InvalidGrid("need at least one sample".into()));
    }
    let batches = m.div_ceil(SAMPLE_BATCH);
    let per_batch: Vec<Vec<(f64, f64, f64)>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = SAMPLE_BATCH.min(m - b * SAMPLE_BATCH);
            (0..count)
                .filter_map(|_| {
                    let x = sampler.sample(&mut rng);
                    if !fa.grid.contains(&x) {
                        return None;
                    }
                    let f = f_exact(&x);
                    let p = fa.eval(&x).value;
                    Some((sampler.log_density(&x), f, p))
                })
                .collect()
        })
        .collect();
    let samples: Vec<(f64, f64, f64)> = per_batch.into_iter().flatten().collect();
    if samples.is_empty() {
        return Err(FttError::AllSamplesRejected(m));
    }
    // Importance weights 1/q, rescaled by a common factor to stay finite.
    let shift = samples.iter().map(|s| -s.0).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for &(lq, f, p) in &samples {
        let w = (-lq - shift).exp();
        num += w * (f - p) * (f - p);
        den += w * f * f;
    }
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn small_rules() {
        let g = make_grid(1, 1.0, 1).unwrap();
        assert_eq!(g.nodes(), &[0.0]);
        assert!((g.weights()[0] - 2.0).abs() < 1e-15);
        let g = make_grid(1, 1.0, 2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((g.nodes()[0] + r).abs() < 1e-15 && (g.nodes()[1] - r).abs() < 1e-15);
        assert!((g.weights()[0] - 1.0).abs() < 1e-14 && (g.weights()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_grid(2, 1.0, 0).is_err());
        assert!(make_grid(2, 0.0, 3).is_err());
        assert!(make_grid(2, -1.0, 3).is_err());
    }

    #[test]
    fn exactness_degree_eight_on_five_points() {
        let g = make_grid(1, 7.0, 5).unwrap();
        let exact = 2.0 * 7f64.powi(9) / 9.0;
        assert!((g.integrate_1d(|x| x.powi(8)) - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn grid_invariants_across_sizes() {
        for n in [1, 2, 3, 7, 20, 61, 120, 200] {
            // Keep a^(2n) representable.
            let a = if n <= 120 { 7.0 } else { 1.0 };
            let g = make_grid(1, a, n).unwrap();
            let sum: f64 = g.weights().iter().sum();
            assert!((sum - 2.0 * a).abs() <= 1e-12 * 2.0 * a, "n = {n}");
            assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
            for i in 0..n {
                assert_eq!(g.nodes()[i], -g.nodes()[n - 1 - i]);
            }
            for deg in (0..2 * n).step_by(2) {
                let exact = 2.0 * a.powi(deg as i32 + 1) / (deg as f64 + 1.0);
                let q = g.integrate_1d(|x| x.powi(deg as i32));
                assert!((q - exact).abs() <= 1e-10 * exact, "n = {n}, degree {deg}");
            }
        }
    }

    #[test]
    fn interpolant_reproduces_nodes_and_constants() {
        let grid = make_grid(3, 2.0, 6).unwrap();
        let f = |x: &[f64]| (x[0] - 0.3 * x[1]).sin() + x[2] * x[2];
        let fa = FttApprox::from_dense_samples(grid.clone(), f, 0.0).unwrap();
        let idx = [1, 4, 2];
        let e = fa.eval(&grid.point(&idx));
        assert!((e.value - fa.values().eval_entry(&idx).unwrap()).abs() < 1e-12);
        assert!(!e.extrapolated);

        let c = FttApprox::new(grid.clone(), TtTensor::rank_one(&vec![vec![2.5; 6]; 3]).unwrap()).unwrap();
        let v = c.eval(&[0.11, -1.7, 1.3]).value;
        assert!((v - 15.625).abs() < 1e-12);
        assert!(c.eval(&[0.0, 0.0, 2.5]).extrapolated);
    }

    #[test]
    fn one_dimensional_gaussian_interpolation() {
        // Interpolation errors p_n(0.3) - e^{-0.045}, from 40-digit Lagrange evaluation.
        let frozen = [(40, 2.7396032e-8), (50, 8.210181e-11), (60, 4.6772173e-14)];
        for (n, err) in frozen {
            let grid = make_grid(1, 7.0, n).unwrap();
            let fa = FttApprox::from_dense_samples(grid, |x| (-0.5 * x[0] * x[0]).exp(), 0.0).unwrap();
            let v = fa.eval(&[0.3]).value;
            let diff = v - (-0.045f64).exp();
            assert!((diff - err).abs() <= 1e-3 * err.abs() + 2e-15, "n = {n}: {diff:e}");
        }
    }

    #[test]
    fn weighted_norms() {
        let grid = make_grid(3, 1.5, 4).unwrap();
        let one = FttApprox::new(grid, TtTensor::rank_one(&vec![vec![1.0; 4]; 3]).unwrap()).unwrap();
        assert!((one.weighted_l2_norm() - 3f64.powf(1.5)).abs() < 1e-12);

        let grid = make_grid(2, 7.0, 60).unwrap();
        let g = |x: f64| (-0.5 * x * x).exp();
        let factors: Vec<Vec<f64>> = (0..2).map(|_| grid.nodes().iter().map(|&x| g(x)).collect()).collect();
        let fa = FttApprox::new(grid.clone(), TtTensor::rank_one(&factors).unwrap()).unwrap();
        assert!((fa.weighted_l2_norm() - std::f64::consts::PI.sqrt()).abs() < 1e-8);
        let one_d = grid.integrate_1d(|x| g(x) * g(x)).sqrt();
        assert!((fa.weighted_l2_norm() - one_d * one_d).abs() < 1e-10);
    }

    #[test]
    fn truncation_behaviour() {
        let grid = make_grid(3, 7.0, 24).unwrap();
        let rank_one = FttApprox::new(grid.clone(), TtTensor::rank_one(&vec![grid.nodes().iter().map(|x| (-x * x).exp()).collect(); 3]).unwrap()).unwrap();
        for eps in [1e-12, 1e-3, 0.5] {
            assert_eq!(rank_one.truncate_to_accuracy(eps).unwrap().1, vec![1, 1, 1, 1]);
        }

        // Tridiagonal precision matrix [[1, .4, 0], [.4, 1, .4], [0, .4, 1]].
        let f = |x: &[f64]| {
            let q = x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + 0.8 * (x[0] * x[1] + x[1] * x[2]);
            (-0.5 * q).exp()
        };
        let fa = FttApprox::from_dense_samples(grid, f, 1e-13).unwrap();
        assert_eq!(fa.truncate_to_accuracy(2.0).unwrap().1, vec![1, 1, 1, 1]);
        let mut prev = vec![0; 4];
        for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
            let (tr, ranks) = fa.truncate_to_accuracy(eps).unwrap();
            assert!(ranks.iter().zip(&prev).all(|(r, p)| r >= p), "{ranks:?} after {prev:?}");
            assert!(fa.relative_l2_distance(&tr).unwrap() <= eps * (1.0 + 1e-8));
            prev = ranks;
        }
    }

    struct StdNormal(usize);

    impl PointSampler for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
            (0..self.0).map(|_| StandardNormal.sample(rng)).collect()
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        }
    }

    #[test]
    fn sampled_error_zero_for_exact_and_deterministic() {
        let grid = make_grid(2, 7.0, 12).unwrap();
        let fa = FttApprox::from_dense_samples(grid, |x| (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp(), 0.0).unwrap();
        let same = |x: &[f64]| fa.eval(x).value;
        let e = sampled_relative_error(&fa, &same, &StdNormal(2), 3000, 1).unwrap();
        assert!(e < 1e-12);
        let truth = |x: &[f64]| (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp();
        let a = sampled_relative_error(&fa, &truth, &StdNormal(2), 3000, 9).unwrap();
        let b = sampled_relative_error(&fa, &truth, &StdNormal(2), 3000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_rejected_is_an_error() {
        let grid = make_grid(2, 1e-3, 3).unwrap();
        let fa = FttApprox::new(grid, TtTensor::rank_one(&vec![vec![1.0; 3]; 2]).unwrap()).unwrap();
        struct Far;
        impl PointSampler for Far {
            fn dim(&self) -> usize {
                2
            }
            fn sample(&self, _: &mut ChaCha8Rng) -> Vec<f64> {
                vec![5.0, 5.0]
            }
            fn log_density(&self, _: &[f64]) -> f64 {
                0.0
            }
        }
        let one = |_: &[f64]| 1.0;
        assert!(matches!(sampled_relative_error(&fa, &one, &Far, 10, 0), Err(FttError::AllSamplesRejected(10))));
    }

    #[test]
    fn coarse_grid_estimate_tracks_quadrature_error() {
        // Sharp anisotropic Gaussian on a 5-point grid.
        let gamma = [[4.0, 1.0], [1.0, 3.0]];
        let f = move |x: &[f64]| {
            (-0.5 * (gamma[0][0] * x[0] * x[0] + 2.0 * gamma[0][1] * x[0] * x[1] + gamma[1][1] * x[1] * x[1])).exp()
        };
        let grid = make_grid(2, 3.0, 5).unwrap();
        let fa = FttApprox::from_dense_samples(grid, f, 0.0).unwrap();
        // Oracle: 200-point product quadrature of the squared error.
        let fine = make_grid(1, 3.0, 200).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &x) in fine.nodes().iter().enumerate() {
            for (j, &y) in fine.nodes().iter().enumerate() {
                let w = fine.weights()[i] * fine.weights()[j];
                let fv = f(&[x, y]);
                let pv = fa.eval(&[x, y]).value;
                num += w * (fv - pv).powi(2);
                den += w * fv * fv;
            }
        }
        let oracle = (num / den).sqrt();
        struct Target;
        impl PointSampler for Target {
            fn dim(&self) -> usize {
                2
            }
            fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
                // Cholesky of Γ^{-1} = [[3, -1], [-1, 4]] / 11.
                let z: [f64; 2] = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
                let l00 = (3.0f64 / 11.0).sqrt();
                let l10 = -1.0 / 11.0 / l00;
                let l11 = (4.0 / 11.0 - l10 * l10).sqrt();
                vec![l00 * z[0], l10 * z[0] + l11 * z[1]]
            }
            fn log_density(&self, x: &[f64]) -> f64 {
                -0.5 * (4.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 3.0 * x[1] * x[1])
            }
        }
        let est = sampled_relative_error(&fa, &f, &Target, 20_000, 3).unwrap();
        assert!(est <= 3.0 * oracle && est >= oracle / 3.0, "estimate {est}, oracle {oracle}");
    }

    #[test]
    fn interpolation_error_decreases_with_n() {
        let g = |x: f64| (-0.5 * x * x).exp();
        let fine = make_grid(1, 7.0, 300).unwrap();
        let mut errs = Vec::new();
        for n in [20, 40, 80] {
            let grid = make_grid(1, 7.0, n).unwrap();
            let fa = FttApprox::from_dense_samples(grid, |x| g(x[0]), 0.0).unwrap();
            let err = fine.integrate_1d(|x| (g(x) - fa.eval(&[x]).value).powi(2)).sqrt();
            errs.push(err);
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}
