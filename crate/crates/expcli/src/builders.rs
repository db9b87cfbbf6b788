//! Strategies that turn a Gaussian density into a functional TT on a grid.
//! Builders are registered by name and picked at runtime from the config.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Result};
use tt_gauss::cross::{cross_approximate_with, CrossConfig, ProductIndexSampler};
use tt_gauss::ftt::{FttApprox, InterpolationGrid};
use tt_gauss::gaussian::PrecisionMatrix;
use tt_gauss::tt::{tt_svd_relative, DenseTensor, DEFAULT_DENSE_CAP};

/// Weight of the uniform-in-measure component of the validation proposal.
const DEFENSIVE_MIX: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    /// Relative weighted-`L²` accuracy asked of the construction.
    pub target: f64,
    pub seed: u64,
    pub max_rank: usize,
    pub max_sweeps: usize,
    pub max_evals: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct BuiltTensor {
    pub approx: FttApprox,
    /// Estimated relative error of the node values.
    pub est_error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

pub trait TensorBuilder: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self, precision: &PrecisionMatrix, grid: &InterpolationGrid, opts: &BuildOptions) -> Result<BuiltTensor>;
}

/// `exp(-½ xᵀΓx)` at the grid point with multi-index `idx`.
pub fn density_at(precision: &PrecisionMatrix, grid: &InterpolationGrid, idx: &[usize]) -> f64 {
    let x: Vec<f64> = idx.iter().map(|&i| grid.nodes()[i]).collect();
    let g = precision.matrix();
    let mut q = 0.0;
    for (i, xi) in x.iter().enumerate() {
        q += xi * g.row(i).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
    }
    (-0.5 * q).exp()
}

/// Per-axis proposal following the squared density's spread, mixed with the
/// quadrature measure so that tails still get sampled.
pub fn density_proposal(precision: &PrecisionMatrix, grid: &InterpolationGrid) -> Result<ProductIndexSampler> {
    let cov = precision.covariance()?;
    let w = grid.weights();
    let wsum: f64 = w.iter().sum();
    let probs = (0..grid.dim())
        .map(|k| {
            let s2 = cov[(k, k)];
            let g: Vec<f64> = grid.nodes().iter().zip(w).map(|(x, wi)| wi * (-x * x / (2.0 * s2)).exp()).collect();
            let gsum: f64 = g.iter().sum();
            g.iter().zip(w).map(|(gi, wi)| (1.0 - DEFENSIVE_MIX) * gi / gsum + DEFENSIVE_MIX * wi / wsum).collect()
        })
        .collect();
    let measure = vec![w.to_vec(); grid.dim()];
    Ok(ProductIndexSampler::new(probs)?.with_measure(measure)?)
}

/// Rank-adaptive cross interpolation of the node values.
pub struct CrossBuilder;

impl TensorBuilder for CrossBuilder {
    fn name(&self) -> &'static str {
        "cross"
    }

    fn build(&self, precision: &PrecisionMatrix, grid: &InterpolationGrid, opts: &BuildOptions) -> Result<BuiltTensor> {
        let cfg = CrossConfig {
            rng_seed: opts.seed,
            max_rank: opts.max_rank,
            max_sweeps: opts.max_sweeps,
            max_evals: opts.max_evals,
            ..CrossConfig::new(opts.target)
        };
        let sampler = density_proposal(precision, grid)?;
        let f = |idx: &[usize]| density_at(precision, grid, idx);
        let res = cross_approximate_with(&f, &grid.mode_sizes(), &cfg, &sampler)?;
        Ok(BuiltTensor {
            approx: FttApprox::new(grid.clone(), res.tt)?,
            est_error: res.est_rel_error,
            evaluations: res.evaluations,
            converged: res.converged,
        })
    }
}

/// Full enumeration followed by weighted TT-SVD. Only for small grids.
pub struct DenseBuilder;

impl TensorBuilder for DenseBuilder {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn build(&self, precision: &PrecisionMatrix, grid: &InterpolationGrid, opts: &BuildOptions) -> Result<BuiltTensor> {
        let modes = grid.mode_sizes();
        let entries = modes.iter().try_fold(1usize, |a, &n| a.checked_mul(n));
        if entries.is_none_or(|e| e > DEFAULT_DENSE_CAP) {
            bail!("dense builder refuses a {}^{} grid (cap {DEFAULT_DENSE_CAP} entries)", grid.n(), grid.dim());
        }
        let dense = DenseTensor::from_fn(&modes, |idx| density_at(precision, grid, idx));
        let w = grid.weights();
        let weighted = DenseTensor::from_fn(&modes, |idx| dense.get(idx) * idx.iter().map(|&i| w[i].sqrt()).product::<f64>());
        let tt = tt_svd_relative(&weighted, 0.1 * opts.target)?;
        let approx = FttApprox::new(grid.clone(), unweight(&tt, w)?)?;
        let rec = tt.to_dense();
        let num: f64 = weighted.data().iter().zip(rec.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let est_error = (num.sqrt() / weighted.frobenius_norm()).max(0.0);
        Ok(BuiltTensor { approx, est_error, evaluations: dense.len(), converged: est_error <= opts.target })
    }
}

fn unweight(tt: &tt_gauss::TtTensor, w: &[f64]) -> Result<tt_gauss::TtTensor> {
    let inv: Vec<f64> = w.iter().map(|v| 1.0 / v.sqrt()).collect();
    Ok(tt.scale_modes(&vec![inv; tt.dim()])?)
}

/// Builders by name.
pub fn builder_registry() -> BTreeMap<&'static str, Box<dyn TensorBuilder>> {
    let all: Vec<Box<dyn TensorBuilder>> = vec![Box::new(CrossBuilder), Box::new(DenseBuilder)];
    all.into_iter().map(|b| (b.name(), b)).collect()
}

pub fn builder(name: &str) -> Result<Box<dyn TensorBuilder>> {
    let mut reg = builder_registry();
    let names: Vec<&str> = reg.keys().copied().collect();
    reg.remove(name).ok_or_else(|| anyhow!("unknown builder {name:?}; available: {}", names.join(", ")))
}
