//! Extended Kalman filter for a chain of weakly coupled pendulums, with
//! synthetic measurements and rank analysis of the covariance blocks.
//!
//! The state is ordered `(θ₁, ω₁, …, θ_N, ω_N)`. Pendulum `j` obeys
//! `θ̇_j = ω_j`, `ω̇_j = -sin θ_j + κ(coupling)` where the coupling is
//! one-sided at the chain ends.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::gaussian::{self, GaussError, SubdiagonalAnalysis, ToleranceMode};
use crate::linalg::{self, LinalgError, Matrix};
use crate::ode::{self, AdaptiveOptions, OdeError};

pub const DEFAULT_KAPPA: f64 = 0.2;
pub const DEFAULT_PROCESS_NOISE: f64 = 1e-3;
pub const DEFAULT_MEASUREMENT_NOISE: f64 = 0.04;
pub const DEFAULT_INITIAL_VARIANCE: f64 = 0.09;
pub const DEFAULT_INITIAL_ANGLE: f64 = 0.25;
pub const DEFAULT_DT: f64 = 0.4;
pub const DEFAULT_STEPS: usize = 250;
/// Largest RK4 substep used for the covariance equation.
pub const MAX_SUBSTEP: f64 = 0.01;
pub const TRUTH_RTOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite filter state at t = {0}")]
    NonFinite(f64),
    #[error("innovation variance {0:e} is not positive")]
    SingularInnovation(f64),
    #[error("truth integration failed: {0}")]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Gauss(#[from] GaussError),
}

pub type Result<T> = std::result::Result<T, FilterError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumSystem {
    pub n_pendulums: usize,
    pub kappa: f64,
    pub process_noise_var: f64,
    /// Replace `sin θ` by `θ`, which makes the system linear.
    pub linearized: bool,
}

impl PendulumSystem {
    pub fn new(n_pendulums: usize) -> Result<Self> {
        if n_pendulums == 0 {
            return Err(FilterError::InvalidArgument("need at least one pendulum".into()));
        }
        Ok(Self { n_pendulums, kappa: DEFAULT_KAPPA, process_noise_var: DEFAULT_PROCESS_NOISE, linearized: false })
    }

    pub fn linear(n_pendulums: usize) -> Result<Self> {
        Ok(Self { linearized: true, ..Self::new(n_pendulums)? })
    }

    pub fn dim(&self) -> usize {
        2 * self.n_pendulums
    }

    fn restoring(&self, theta: f64) -> f64 {
        if self.linearized { theta } else { theta.sin() }
    }

    fn restoring_slope(&self, theta: f64) -> f64 {
        if self.linearized { 1.0 } else { theta.cos() }
    }

    /// `κ Δθ_j`, the net spring force on pendulum `j`.
    fn coupling(&self, x: &[f64], j: usize) -> f64 {
        let n = self.n_pendulums;
        let th = |k: usize| x[2 * k];
        let mut c = 0.0;
        if j + 1 < n {
            c += th(j + 1) - th(j);
        }
        if j > 0 {
            c -= th(j) - th(j - 1);
        }
        self.kappa * c
    }

    pub fn dynamics(&self, x: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.dim()];
        for j in 0..self.n_pendulums {
            dx[2 * j] = x[2 * j + 1];
            dx[2 * j + 1] = -self.restoring(x[2 * j]) + self.coupling(x, j);
        }
        dx
    }

    pub fn jacobian(&self, x: &[f64]) -> Matrix {
        let n = self.n_pendulums;
        let mut f = Matrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            f[(2 * j, 2 * j + 1)] = 1.0;
            let neighbours = (j > 0) as usize + (j + 1 < n) as usize;
            f[(2 * j + 1, 2 * j)] = -self.restoring_slope(x[2 * j]) - self.kappa * neighbours as f64;
            if j > 0 {
                f[(2 * j + 1, 2 * j - 2)] = self.kappa;
            }
            if j + 1 < n {
                f[(2 * j + 1, 2 * j + 2)] = self.kappa;
            }
        }
        f
    }

    /// Default truth initial condition: every `θ = 0.25`, every `ω = 0`.
    pub fn default_initial_state(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| if i % 2 == 0 { DEFAULT_INITIAL_ANGLE } else { 0.0 }).collect()
    }
}

/// Scalar observation `z = H x + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub h: Matrix,
    pub noise_var: f64,
}

impl ObservationModel {
    /// Observes `θ₁` of a `d`-dimensional state.
    pub fn first_angle(d: usize, noise_var: f64) -> Result<Self> {
        if d == 0 || !(noise_var >= 0.0) {
            return Err(FilterError::InvalidArgument(format!("bad observation model: d = {d}, R = {noise_var}")));
        }
        let mut h = Matrix::zeros(1, d);
        h[(0, 0)] = 1.0;
        Ok(Self { h, noise_var })
    }

    pub fn observe(&self, x: &[f64]) -> f64 {
        linalg::dot(self.h.row(0), x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub t: f64,
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl EkfState {
    pub fn new(t: f64, mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(FilterError::InvalidArgument(format!("covariance {:?} for a mean of length {}", cov.shape(), mean.len())));
        }
        Ok(Self { t, mean, cov })
    }

    /// Zero mean, covariance `variance · I`.
    pub fn isotropic(d: usize, variance: f64) -> Self {
        Self { t: 0.0, mean: vec![0.0; d], cov: Matrix::from_diag(&vec![variance; d]) }
    }
}

/// Number of RK4 substeps used for an interval of length `dt`.
pub fn substeps_for(dt: f64) -> usize {
    ((dt / MAX_SUBSTEP) - 1e-9).ceil().max(1.0) as usize
}

/// Propagates mean and covariance over `dt` with `substeps` RK4 steps of the
/// joint system `ẋ = f(x)`, `Ṗ = F(x) P + P F(x)ᵀ + εI`.
pub fn ekf_predict(sys: &PendulumSystem, state: &EkfState, dt: f64, substeps: usize) -> Result<EkfState> {
    let d = sys.dim();
    if !(dt > 0.0) || substeps == 0 || state.mean.len() != d {
        return Err(FilterError::InvalidArgument(format!("predict needs dt > 0, substeps ≥ 1, state of length {d}")));
    }
    let rhs = |_: f64, y: &[f64]| -> Vec<f64> {
        let (x, p) = y.split_at(d);
        let f = sys.jacobian(x);
        let mut out = sys.dynamics(x);
        out.reserve(d * d);
        for i in 0..d {
            for j in 0..d {
                let mut v = 0.0;
                for k in 0..d {
                    v += f[(i, k)] * p[k * d + j] + p[i * d + k] * f[(j, k)];
                }
                if i == j {
                    v += sys.process_noise_var;
                }
                out.push(v);
            }
        }
        out
    };
    let mut y = state.mean.clone();
    y.extend_from_slice(state.cov.as_slice());
    let y = ode::rk4_integrate(rhs, state.t, &y, state.t + dt, substeps).map_err(|_| FilterError::NonFinite(state.t + dt))?;
    let cov = Matrix::from_vec(d, d, y[d..].to_vec()).map_err(|_| FilterError::NonFinite(state.t + dt))?.symmetrized();
    Ok(EkfState { t: state.t + dt, mean: y[..d].to_vec(), cov })
}

/// Kalman measurement update with a scalar observation `z`.
pub fn ekf_update(state: &EkfState, obs: &ObservationModel, z: f64) -> Result<EkfState> {
    let d = state.mean.len();
    if obs.h.shape() != (1, d) {
        return Err(FilterError::InvalidArgument(format!("observation matrix {:?} for state of length {d}", obs.h.shape())));
    }
    let h = obs.h.row(0);
    let ph = state.cov.matvec(h)?;
    let s = linalg::dot(h, &ph) + obs.noise_var;
    if !(s > 0.0) || !s.is_finite() {
        return Err(FilterError::SingularInnovation(s));
    }
    let gain: Vec<f64> = ph.iter().map(|v| v / s).collect();
    let innovation = z - obs.observe(&state.mean);
    let mean: Vec<f64> = state.mean.iter().zip(&gain).map(|(m, k)| m + k * innovation).collect();
    // (I - K H) P = P - K (H P); H P is the transpose of P Hᵀ.
    let cov = Matrix::from_fn(d, d, |i, j| state.cov[(i, j)] - gain[i] * ph[j]).symmetrized();
    if mean.iter().any(|v| !v.is_finite()) || !cov.is_finite() {
        return Err(FilterError::NonFinite(state.t));
    }
    Ok(EkfState { t: state.t, mean, cov })
}

/// Truth trajectory and noisy observations of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub times: Vec<f64>,
    pub truth: Vec<Vec<f64>>,
    pub z: Vec<f64>,
}

/// `t_ℓ = ℓ dt` for `ℓ = 0 … steps`.
pub fn uniform_schedule(dt: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|l| l as f64 * dt).collect()
}

/// Integrates the noise-free dynamics from `x0` at `times[0]` with an
/// adaptive 5(4) pair (relative tolerance [`TRUTH_RTOL`]) and perturbs the
/// observed component with seeded Gaussian noise of variance `obs.noise_var`.
pub fn synthesize_data(sys: &PendulumSystem, x0: &[f64], times: &[f64], obs: &ObservationModel, seed: u64) -> Result<Measurements> {
    if x0.len() != sys.dim() || times.is_empty() {
        return Err(FilterError::InvalidArgument(format!("need a state of length {} and at least one time", sys.dim())));
    }
    let opts = AdaptiveOptions { rtol: TRUTH_RTOL, atol: TRUTH_RTOL * 1e-3, ..Default::default() };
    let truth = ode::dopri5(|_, x| sys.dynamics(x), times[0], x0, times, &opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, obs.noise_var.sqrt()).map_err(|e| FilterError::InvalidArgument(e.to_string()))?;
    let z = truth.iter().map(|x| obs.observe(x) + noise.sample(&mut rng)).collect();
    Ok(Measurements { times: times.to_vec(), truth, z })
}

/// Filters `z` observed at `times`: update with `z[0]` at `times[0]`, then
/// predict and update for every later time. Returns the posterior at each time.
pub fn run_ekf(sys: &PendulumSystem, obs: &ObservationModel, initial: &EkfState, times: &[f64], z: &[f64]) -> Result<Vec<EkfState>> {
    if times.len() != z.len() || times.is_empty() {
        return Err(FilterError::InvalidArgument(format!("{} times for {} measurements", times.len(), z.len())));
    }
    let mut state = EkfState { t: times[0], ..initial.clone() };
    let mut out = Vec::with_capacity(times.len());
    state = ekf_update(&state, obs, z[0])?;
    out.push(state.clone());
    for (w, &zl) in times.windows(2).zip(&z[1..]) {
        let dt = w[1] - w[0];
        state = ekf_predict(sys, &state, dt, substeps_for(dt))?;
        state = ekf_update(&state, obs, zl)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Off-diagonal block spectra of a covariance and their truncated ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceRanks {
    pub analysis: SubdiagonalAnalysis,
    pub ranks: Vec<usize>,
    pub max_rank: usize,
}

pub fn covariance_rank_analysis(cov: &Matrix, trunc_tol: f64, mode: ToleranceMode) -> Result<CovarianceRanks> {
    let asym = cov.asymmetry();
    if asym > 1e-8 * cov.max_abs().max(1.0) {
        return Err(LinalgError::Asymmetric(asym).into());
    }
    let analysis = gaussian::subdiagonal_blocks(cov)?;
    let ranks = analysis.ranks(trunc_tol, mode);
    let max_rank = ranks.iter().copied().max().unwrap_or(0);
    Ok(CovarianceRanks { analysis, ranks, max_rank })
}

/// Least-squares slope of `ln σ_i` against `i`, using the values above
/// `floor · σ_1`. `None` with fewer than two usable values.
pub fn log_linear_slope(sigma: &[f64], floor: f64) -> Option<f64> {
    let s1 = *sigma.first()?;
    let pts: Vec<(f64, f64)> = sigma
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0 && s > floor * s1)
        .map(|(i, &s)| (i as f64, s.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
