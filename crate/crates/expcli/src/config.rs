//! Experiment configuration: per-experiment defaults, overlaid by a TOML
//! file, overlaid by command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tt_gauss::gaussian::SpectrumSpec;

/// Which experiment family a configuration belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    DomainSize,
    DimensionSweep,
    LowRankSweep,
    ExpDecaySweep,
    Filtering,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::DomainSize,
        ExperimentKind::DimensionSweep,
        ExperimentKind::LowRankSweep,
        ExperimentKind::ExpDecaySweep,
        ExperimentKind::Filtering,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::DomainSize => "domain_size",
            ExperimentKind::DimensionSweep => "dimension_sweep",
            ExperimentKind::LowRankSweep => "low_rank_sweep",
            ExperimentKind::ExpDecaySweep => "exp_decay_sweep",
            ExperimentKind::Filtering => "filtering",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id || k.id().replace('_', "-") == id)
    }
}

/// Subdiagonal spectrum family for experiments that hold it fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecFamily {
    FixedRank,
    ExpDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub realizations: usize,
    /// Dimension for sweeps that do not vary it.
    pub d: usize,
    /// Dimension ladder for `dimension_sweep`.
    pub d_values: Vec<usize>,
    /// Half-width of the box `[-a, a]^d`.
    pub a: f64,
    /// Half-width ladder for `domain_size`.
    pub a_values: Vec<f64>,
    /// Grid nodes per axis.
    pub n: usize,
    /// Optional node count per entry of `eps`; one tensor is built per distinct value.
    pub n_per_eps: Vec<usize>,
    pub eps: Vec<f64>,
    pub lambda_min: f64,
    /// Spectrum family held fixed by `domain_size` and `dimension_sweep`.
    pub spec: SpecFamily,
    /// Subdiagonal rank for the fixed-rank family.
    pub l: usize,
    pub l_values: Vec<usize>,
    pub sigma: f64,
    pub alpha: f64,
    /// Decay rate for the exponential family.
    pub theta: f64,
    pub theta_values: Vec<f64>,
    /// Tensor construction strategy, see the builder registry.
    pub builder: String,
    /// Cross accuracy target; defaults to a tenth of the smallest `eps`.
    pub cross_target: Option<f64>,
    pub max_rank: usize,
    pub max_sweeps: usize,
    pub max_evals: Option<usize>,
    pub jobs: Option<usize>,
    /// Add a wall-time column. Off by default so reruns are byte-identical.
    pub timings: bool,
    pub n_pendulums: Vec<usize>,
    pub kappa: f64,
    pub process_noise: f64,
    pub measurement_noise: f64,
    pub initial_variance: f64,
    pub dt: f64,
    pub steps: usize,
    pub trunc_tol: f64,
    /// Read `trunc_tol` as an absolute singular-value threshold.
    pub absolute_tol: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::defaults_for(ExperimentKind::LowRankSweep, false)
    }
}

impl ExperimentConfig {
    pub fn defaults_for(kind: ExperimentKind, paper_scale: bool) -> Self {
        let mut c = Self {
            experiment: kind,
            seed: 0,
            realizations: if paper_scale { 10 } else { 5 },
            d: 8,
            d_values: vec![4, 6, 8, 10],
            a: 7.0,
            a_values: vec![5.0, 7.0, 9.0],
            n: 60,
            n_per_eps: Vec::new(),
            eps: vec![1e-2, 1e-3, 1e-4],
            lambda_min: 0.5,
            spec: SpecFamily::FixedRank,
            l: 2,
            l_values: vec![1, 2, 3],
            sigma: 1.0,
            alpha: 1.0,
            theta: 1.0,
            theta_values: vec![2.5, 2.0, 1.5, 1.0],
            builder: "cross".into(),
            cross_target: None,
            max_rank: 120,
            max_sweeps: 40,
            max_evals: None,
            jobs: None,
            timings: false,
            n_pendulums: vec![3, 5, 8, 10],
            kappa: tt_gauss::filtering::DEFAULT_KAPPA,
            process_noise: tt_gauss::filtering::DEFAULT_PROCESS_NOISE,
            measurement_noise: tt_gauss::filtering::DEFAULT_MEASUREMENT_NOISE,
            initial_variance: tt_gauss::filtering::DEFAULT_INITIAL_VARIANCE,
            dt: tt_gauss::filtering::DEFAULT_DT,
            steps: 50,
            trunc_tol: 1e-2,
            absolute_tol: false,
        };
        match kind {
            ExperimentKind::DomainSize => {
                c.d = 4;
                c.spec = SpecFamily::ExpDecay;
                c.theta = 2.0;
                c.eps = vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
                if paper_scale {
                    c.d = 30;
                    c.n = 250;
                    c.a_values = vec![5.0, 6.0, 7.0, 8.0, 9.0];
                }
            }
            ExperimentKind::DimensionSweep => {
                c.spec = SpecFamily::ExpDecay;
                c.eps = vec![1e-4];
                if paper_scale {
                    c.d_values = vec![5, 10, 15, 20, 25, 30, 35, 40];
                    c.n = 200;
                }
            }
            ExperimentKind::LowRankSweep => {
                if paper_scale {
                    c.d = 15;
                    c.n = 200;
                    c.l_values = vec![1, 2, 3, 4];
                    c.eps = vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
                }
            }
            ExperimentKind::ExpDecaySweep => {
                if paper_scale {
                    c.d = 30;
                    c.n = 250;
                    c.eps = vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
                }
            }
            ExperimentKind::Filtering => {
                c.realizations = 1;
                if paper_scale {
                    c.n_pendulums = vec![5, 10, 15, 20];
                    c.steps = tt_gauss::filtering::DEFAULT_STEPS;
                }
            }
        }
        if paper_scale {
            c.max_rank = 400;
        }
        c
    }

    /// Overlays the keys of a TOML document onto `self`.
    pub fn merge_toml(&self, text: &str) -> Result<Self> {
        let overlay: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        let mut base = toml::Table::try_from(self).context("serializing defaults")?;
        for (k, v) in overlay {
            if k == "experiment" {
                bail!("the experiment is chosen by the subcommand, not the config file");
            }
            base.insert(k, v);
        }
        let merged: Self = base.try_into().context("config has unknown keys or wrong value types")?;
        Ok(merged)
    }

    pub fn load(kind: ExperimentKind, paper_scale: bool, path: Option<&Path>) -> Result<Self> {
        let defaults = Self::defaults_for(kind, paper_scale);
        let cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                defaults.merge_toml(&text).with_context(|| format!("in {}", p.display()))?
            }
            None => defaults,
        };
        Ok(cfg)
    }

    /// Key-value echo of every setting, one `key = value` per line.
    pub fn to_toml_lines(&self) -> Vec<String> {
        let table = toml::Table::try_from(self).expect("config serializes");
        table.iter().map(|(k, v)| format!("{k} = {v}")).collect()
    }

    pub fn effective_cross_target(&self) -> f64 {
        self.cross_target.unwrap_or_else(|| 0.1 * self.eps.iter().copied().fold(f64::INFINITY, f64::min))
    }

    pub fn fixed_spec(&self) -> SpectrumSpec {
        match self.spec {
            SpecFamily::FixedRank => SpectrumSpec::FixedRank { l: self.l, sigma: self.sigma },
            SpecFamily::ExpDecay => SpectrumSpec::ExpDecay { alpha: self.alpha, theta: self.theta },
        }
    }

    /// `(n, eps values using that n)` groups, in order of first appearance.
    pub fn grid_groups(&self) -> Vec<(usize, Vec<f64>)> {
        let mut groups: Vec<(usize, Vec<f64>)> = Vec::new();
        for (i, &e) in self.eps.iter().enumerate() {
            let n = self.n_per_eps.get(i).copied().unwrap_or(self.n);
            match groups.iter_mut().find(|g| g.0 == n) {
                Some(g) => g.1.push(e),
                None => groups.push((n, vec![e])),
            }
        }
        groups
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            bail!("realizations must be at least 1");
        }
        if self.eps.is_empty() || self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            bail!("eps values must lie in (0, 1), got {:?}", self.eps);
        }
        if !self.n_per_eps.is_empty() && self.n_per_eps.len() != self.eps.len() {
            bail!("n_per_eps has {} entries for {} eps values", self.n_per_eps.len(), self.eps.len());
        }
        if self.n < 2 || self.n_per_eps.iter().any(|&n| n < 2) {
            bail!("grids need at least 2 nodes per axis");
        }
        if !(self.a > 0.0) || self.a_values.iter().any(|&a| !(a > 0.0)) {
            bail!("half-widths must be positive");
        }
        if !(self.lambda_min > 0.0) {
            bail!("lambda_min must be positive");
        }
        if self.cross_target.is_some_and(|t| !(t > 0.0)) {
            bail!("cross_target must be positive");
        }
        if self.max_rank == 0 || self.max_sweeps == 0 || self.max_evals == Some(0) || self.jobs == Some(0) {
            bail!("max_rank, max_sweeps, max_evals and jobs must be at least 1");
        }
        let dims_ok = match self.experiment {
            ExperimentKind::DimensionSweep => !self.d_values.is_empty() && self.d_values.iter().all(|&d| d >= 2),
            ExperimentKind::Filtering => !self.n_pendulums.is_empty() && self.n_pendulums.iter().all(|&n| n >= 1),
            _ => self.d >= 2,
        };
        if !dims_ok {
            bail!("dimensions must be at least 2 (pendulum counts at least 1)");
        }
        match self.experiment {
            ExperimentKind::LowRankSweep if self.l_values.is_empty() || self.l_values.contains(&0) => bail!("l_values must be nonempty and ≥ 1"),
            ExperimentKind::ExpDecaySweep if self.theta_values.is_empty() || self.theta_values.iter().any(|&t| !(t > 0.0)) => {
                bail!("theta_values must be nonempty and positive")
            }
            ExperimentKind::DomainSize if self.a_values.is_empty() => bail!("a_values must be nonempty"),
            ExperimentKind::Filtering if !(self.dt > 0.0) || self.steps == 0 || !(self.trunc_tol > 0.0) => {
                bail!("filtering needs dt > 0, steps ≥ 1 and trunc_tol > 0")
            }
            _ => {}
        }
        if matches!(self.experiment, ExperimentKind::DomainSize | ExperimentKind::DimensionSweep) {
            self.fixed_spec().validate()?;
        }
        Ok(())
    }
}
