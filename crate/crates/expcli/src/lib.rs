//! Experiment runner for rank studies of Gaussian densities in the
//! Tensor-Train format and of Kalman-filter covariances.
//!
//! Experiments and tensor builders both live in name-keyed registries so the
//! command line and config files can select them at runtime.

pub mod builders;
pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

use anyhow::Result;

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::{experiment, experiment_registry, Experiment, ExperimentOutput};

/// Runs `cfg` and writes every table under `out_dir`. Returns the written
/// paths and the number of flagged rows.
pub fn run_and_write(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(Vec<PathBuf>, usize)> {
    let exp = experiment(cfg.experiment)?;
    let out = exp.run(cfg)?;
    let meta = output::metadata_lines(cfg, &out.notes);
    let paths = out.tables.iter().map(|t| output::write_table(out_dir, &meta, t)).collect::<Result<Vec<_>>>()?;
    Ok((paths, out.flagged))
}
