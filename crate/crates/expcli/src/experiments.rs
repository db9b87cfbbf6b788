//! The experiment families, each behind the [`Experiment`] trait and looked
//! up by id at runtime.

use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use tt_gauss::cross::{FIBER_RANK_TOL, MAXVOL_TOL, ROUNDING_FRACTION};
use tt_gauss::filtering::{
    covariance_rank_analysis, log_linear_slope, run_ekf, synthesize_data, uniform_schedule, EkfState, ObservationModel,
    PendulumSystem, MAX_SUBSTEP, TRUTH_RTOL,
};
use tt_gauss::ftt::make_grid;
use tt_gauss::gaussian::{bound_exp_decay, bound_low_rank, generate_precision, SpectrumSpec, ToleranceMode};

use crate::builders::{builder, BuildOptions};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::output::{fmt_f64, join, Table};

/// Singular values below this fraction of `σ₁` are left out of decay fits.
pub const SLOPE_FLOOR: f64 = 1e-14;

pub const RESULT_COLUMNS: [&str; 17] = [
    "experiment",
    "realization",
    "seed",
    "d",
    "spec",
    "lambda_min",
    "a",
    "n",
    "eps",
    "ranks",
    "max_rank",
    "bound",
    "log_bound",
    "est_error",
    "appr_error",
    "evaluations",
    "converged",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    /// Rows whose tensor construction did not meet its target.
    pub flagged: usize,
    /// Table-independent metadata (integrators, tolerances).
    pub notes: Vec<String>,
}

pub trait Experiment: Send + Sync {
    fn kind(&self) -> ExperimentKind;
    fn summary(&self) -> &'static str;
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutput>;
}

/// One density problem: a spectrum, a dimension and a box.
#[derive(Debug, Clone, Copy)]
struct DensityTask {
    d: usize,
    spec: SpectrumSpec,
    a: f64,
    realization: usize,
}

/// One output row before formatting.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: &'static str,
    pub realization: usize,
    pub seed: u64,
    pub d: usize,
    pub spec: String,
    pub lambda_min: f64,
    pub a: f64,
    pub n: usize,
    pub eps: f64,
    pub ranks: Vec<usize>,
    pub max_rank: usize,
    pub bound: f64,
    pub log_bound: f64,
    pub est_error: f64,
    pub appr_error: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub wall_time: f64,
}

impl ResultRow {
    fn record(&self, timings: bool) -> Vec<String> {
        let mut r = vec![
            self.experiment.to_string(),
            self.realization.to_string(),
            self.seed.to_string(),
            self.d.to_string(),
            self.spec.clone(),
            fmt_f64(self.lambda_min),
            fmt_f64(self.a),
            self.n.to_string(),
            fmt_f64(self.eps),
            join(&self.ranks),
            self.max_rank.to_string(),
            fmt_f64(self.bound),
            fmt_f64(self.log_bound),
            fmt_f64(self.est_error),
            fmt_f64(self.appr_error),
            self.evaluations.to_string(),
            self.converged.to_string(),
        ];
        if timings {
            r.push(format!("{:.3}", self.wall_time));
        }
        r
    }
}

fn rank_bound(spec: &SpectrumSpec, lambda_min: f64, d: usize, eps: f64) -> Result<(f64, f64)> {
    Ok(match *spec {
        SpectrumSpec::FixedRank { l, sigma } => {
            let b = bound_low_rank(l, sigma, lambda_min, d, eps)?;
            (b.tight, b.tight.ln())
        }
        SpectrumSpec::ExpDecay { alpha, theta } => {
            let b = bound_exp_decay(alpha, theta, lambda_min, d, eps)?;
            (b.bound, b.log_bound)
        }
    })
}

fn run_density_task(cfg: &ExperimentConfig, task: &DensityTask) -> Result<Vec<ResultRow>> {
    let seed = cfg.seed.wrapping_add(task.realization as u64);
    let started = Instant::now();
    let precision = generate_precision(task.d, &task.spec, cfg.lambda_min, seed)
        .with_context(|| format!("generating Γ for d = {}, {}, seed {seed}", task.d, task.spec.descriptor()))?;
    let strategy = builder(&cfg.builder)?;
    let mut rows = Vec::new();
    for (n, eps_group) in cfg.grid_groups() {
        let grid = make_grid(task.d, task.a, n)?;
        let target = cfg.cross_target.unwrap_or(0.1 * eps_group.iter().copied().fold(f64::INFINITY, f64::min));
        let opts = BuildOptions { target, seed, max_rank: cfg.max_rank, max_sweeps: cfg.max_sweeps, max_evals: cfg.max_evals };
        let built = strategy.build(&precision, &grid, &opts)?;
        for &eps in &eps_group {
            let (trunc, all_ranks) = built.approx.truncate_to_accuracy(eps)?;
            let ranks = all_ranks[1..all_ranks.len() - 1].to_vec();
            let appr_error = trunc.relative_l2_distance(&built.approx)?;
            let (bound, log_bound) = rank_bound(&task.spec, cfg.lambda_min, task.d, eps)?;
            rows.push(ResultRow {
                experiment: cfg.experiment.id(),
                realization: task.realization,
                seed,
                d: task.d,
                spec: task.spec.descriptor(),
                lambda_min: cfg.lambda_min,
                a: task.a,
                n,
                eps,
                max_rank: ranks.iter().copied().max().unwrap_or(1),
                ranks,
                bound,
                log_bound,
                est_error: built.est_error,
                appr_error,
                evaluations: built.evaluations,
                converged: built.converged,
                wall_time: started.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

fn run_density_tasks(cfg: &ExperimentConfig, tasks: Vec<DensityTask>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs.unwrap_or(0)).build()?;
    let rows: Vec<ResultRow> = pool
        .install(|| tasks.par_iter().map(|t| run_density_task(cfg, t)).collect::<Result<Vec<_>>>())?
        .into_iter()
        .flatten()
        .collect();
    let mut header: Vec<&str> = RESULT_COLUMNS.to_vec();
    if cfg.timings {
        header.push("wall_time_s");
    }
    let mut table = Table::new(cfg.experiment.id(), &header);
    let flagged = rows.iter().filter(|r| !r.converged).count();
    for r in &rows {
        table.push(r.record(cfg.timings));
    }
    let notes = vec![
        format!("builder: {}", cfg.builder),
        format!("cross_target: {}", fmt_f64(cfg.effective_cross_target())),
        format!(
            "tolerances: maxvol {MAXVOL_TOL}, fiber rank {FIBER_RANK_TOL:e}, final rounding {ROUNDING_FRACTION} x target; truncation in the weighted L2 norm"
        ),
    ];
    Ok(ExperimentOutput { tables: vec![table], flagged, notes })
}

fn realizations(cfg: &ExperimentConfig, d: usize, spec: SpectrumSpec, a: f64) -> impl Iterator<Item = DensityTask> {
    (0..cfg.realizations).map(move |realization| DensityTask { d, spec, a, realization })
}

pub struct DomainSize;

impl Experiment for DomainSize {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::DomainSize
    }
    fn summary(&self) -> &'static str {
        "ranks versus accuracy for a ladder of box half-widths a"
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
        let tasks = cfg.a_values.iter().flat_map(|&a| realizations(cfg, cfg.d, cfg.fixed_spec(), a)).collect();
        run_density_tasks(cfg, tasks)
    }
}

pub struct DimensionSweep;

impl Experiment for DimensionSweep {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::DimensionSweep
    }
    fn summary(&self) -> &'static str {
        "ranks at fixed accuracy for a ladder of dimensions"
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
        let tasks = cfg.d_values.iter().flat_map(|&d| realizations(cfg, d, cfg.fixed_spec(), cfg.a)).collect();
        run_density_tasks(cfg, tasks)
    }
}

pub struct LowRankSweep;

impl Experiment for LowRankSweep {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::LowRankSweep
    }
    fn summary(&self) -> &'static str {
        "ranks for subdiagonal blocks of rank l with equal singular values"
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
        let tasks = cfg
            .l_values
            .iter()
            .flat_map(|&l| realizations(cfg, cfg.d, SpectrumSpec::FixedRank { l, sigma: cfg.sigma }, cfg.a))
            .collect();
        run_density_tasks(cfg, tasks)
    }
}

pub struct ExpDecaySweep;

impl Experiment for ExpDecaySweep {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::ExpDecaySweep
    }
    fn summary(&self) -> &'static str {
        "ranks for exponentially decaying subdiagonal spectra"
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
        let tasks = cfg
            .theta_values
            .iter()
            .flat_map(|&theta| realizations(cfg, cfg.d, SpectrumSpec::ExpDecay { alpha: cfg.alpha, theta }, cfg.a))
            .collect();
        run_density_tasks(cfg, tasks)
    }
}

pub const FILTER_SUMMARY_COLUMNS: [&str; 9] =
    ["n_pendulums", "d", "snapshot", "t", "max_rank", "max_rank_even", "ranks", "min_slope", "max_slope"];

/// Snapshot of one covariance: ranks per block and spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSnapshot {
    pub label: &'static str,
    pub t: f64,
    pub ranks: Vec<usize>,
    pub spectra: Vec<Vec<f64>>,
    pub max_rank: usize,
    /// Maximum over even split indices `j = 2, 4, …` only.
    pub max_rank_even: usize,
    /// Decay slopes of blocks with at least two singular values.
    pub slopes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub n_pendulums: usize,
    pub times: Vec<f64>,
    pub step_ranks: Vec<Vec<usize>>,
    pub snapshots: Vec<FilterSnapshot>,
}

pub fn filter_run(cfg: &ExperimentConfig, n_pendulums: usize) -> Result<FilterRun> {
    let sys = PendulumSystem {
        kappa: cfg.kappa,
        process_noise_var: cfg.process_noise,
        ..PendulumSystem::new(n_pendulums)?
    };
    let d = sys.dim();
    let obs = ObservationModel::first_angle(d, cfg.measurement_noise)?;
    let times = uniform_schedule(cfg.dt, cfg.steps);
    let data = synthesize_data(&sys, &sys.default_initial_state(), &times, &obs, cfg.seed)
        .with_context(|| format!("synthesizing data for N = {n_pendulums}"))?;
    let states = run_ekf(&sys, &obs, &EkfState::isotropic(d, cfg.initial_variance), &times, &data.z)
        .with_context(|| format!("filtering N = {n_pendulums}"))?;
    let mode = if cfg.absolute_tol { ToleranceMode::Absolute } else { ToleranceMode::Relative };
    let mut step_ranks = Vec::with_capacity(states.len());
    let mut snapshots = Vec::new();
    let mid = cfg.steps / 2;
    for (l, s) in states.iter().enumerate() {
        let ra = covariance_rank_analysis(&s.cov, cfg.trunc_tol, mode)?;
        if l == mid || l == cfg.steps {
            let label = if l == mid { "mid" } else { "final" };
            let max_rank_even = ra.ranks.iter().enumerate().filter(|(j, _)| (j + 1) % 2 == 0).map(|(_, &r)| r).max().unwrap_or(0);
            let slopes = ra.analysis.spectra.iter().filter_map(|sp| log_linear_slope(sp, SLOPE_FLOOR)).collect();
            snapshots.push(FilterSnapshot {
                label,
                t: s.t,
                ranks: ra.ranks.clone(),
                spectra: ra.analysis.spectra.clone(),
                max_rank: ra.max_rank,
                max_rank_even,
                slopes,
            });
        }
        step_ranks.push(ra.ranks);
    }
    Ok(FilterRun { n_pendulums, times, step_ranks, snapshots })
}

pub struct Filtering;

impl Experiment for Filtering {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::Filtering
    }
    fn summary(&self) -> &'static str {
        "EKF on coupled pendulums: covariance block spectra and ranks"
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs.unwrap_or(0)).build()?;
        let runs: Vec<FilterRun> = pool.install(|| cfg.n_pendulums.par_iter().map(|&n| filter_run(cfg, n)).collect::<Result<_>>())?;
        let mut summary = Table::new("filtering_summary", &FILTER_SUMMARY_COLUMNS);
        let mut tables = Vec::new();
        for run in &runs {
            let d = 2 * run.n_pendulums;
            for s in &run.snapshots {
                let min = s.slopes.iter().copied().fold(f64::INFINITY, f64::min);
                let max = s.slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                summary.push(vec![
                    run.n_pendulums.to_string(),
                    d.to_string(),
                    s.label.to_string(),
                    fmt_f64(s.t),
                    s.max_rank.to_string(),
                    s.max_rank_even.to_string(),
                    join(&s.ranks),
                    if s.slopes.is_empty() { String::new() } else { fmt_f64(min) },
                    if s.slopes.is_empty() { String::new() } else { fmt_f64(max) },
                ]);
                let blocks: Vec<String> = (1..d).map(|j| format!("block_{j}")).collect();
                let mut header = vec!["index"];
                header.extend(blocks.iter().map(String::as_str));
                let mut t = Table::new(format!("filtering_spectra_N{}_{}", run.n_pendulums, s.label), &header);
                let len = s.spectra.iter().map(Vec::len).max().unwrap_or(0);
                for i in 0..len {
                    let mut row = vec![(i + 1).to_string()];
                    row.extend(s.spectra.iter().map(|sp| fmt_f64(sp.get(i).copied().unwrap_or(0.0))));
                    t.push(row);
                }
                t.notes.push(format!("t = {}; spectra padded with zeros", fmt_f64(s.t)));
                tables.push(t);
            }
            let mut header = vec!["t".to_string(), "max_rank".to_string()];
            header.extend((1..d).map(|j| format!("rank_block_{j}")));
            let refs: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut steps = Table::new(format!("filtering_steps_N{}", run.n_pendulums), &refs);
            for (t, ranks) in run.times.iter().zip(&run.step_ranks) {
                let mut row = vec![fmt_f64(*t), ranks.iter().copied().max().unwrap_or(0).to_string()];
                row.extend(ranks.iter().map(usize::to_string));
                steps.push(row);
            }
            tables.push(steps);
        }
        tables.insert(0, summary);
        let notes = vec![
            format!("truth integrator: Dormand-Prince 5(4), rtol {TRUTH_RTOL:e}"),
            format!("covariance integrator: RK4, substep <= {MAX_SUBSTEP}"),
            format!(
                "rank tolerance: {} ({})",
                fmt_f64(cfg.trunc_tol),
                if cfg.absolute_tol { "absolute" } else { "relative to sigma_1 of each block" }
            ),
        ];
        Ok(ExperimentOutput { tables, flagged: 0, notes })
    }
}

/// Experiments by id.
pub fn experiment_registry() -> BTreeMap<&'static str, Box<dyn Experiment>> {
    let all: Vec<Box<dyn Experiment>> =
        vec![Box::new(DomainSize), Box::new(DimensionSweep), Box::new(LowRankSweep), Box::new(ExpDecaySweep), Box::new(Filtering)];
    all.into_iter().map(|e| (e.kind().id(), e)).collect()
}

pub fn experiment(kind: ExperimentKind) -> Result<Box<dyn Experiment>> {
    experiment_registry().remove(kind.id()).ok_or_else(|| anyhow!("experiment {} is not registered", kind.id()))
}
