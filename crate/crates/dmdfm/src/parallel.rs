//! Replications of a Monte Carlo grid spread over a thread pool.
//!
//! Each replication draws from its own substreams and outcomes are collected
//! in replication order, so the report is identical for any number of jobs.

use dmdfm_core::simulation::{aggregate_cell, run_replication, Estimator, McReport, SimulationConfig};
use rayon::prelude::*;

use crate::error::{CliError, Result};

pub fn run_monte_carlo_parallel<E: Estimator + ?Sized>(
    grid: &[SimulationConfig],
    estimator: &E,
    keep_estimates: bool,
    jobs: usize,
) -> Result<McReport> {
    for config in grid {
        config.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::usage(format_args!("cannot start {jobs} worker threads: {e}")))?;
    let cells = pool.install(|| {
        grid.iter()
            .map(|config| {
                log::info!("cell ({}, {}): {} replications", config.n, config.t, config.reps);
                let outcomes: Vec<_> = (0..config.reps)
                    .into_par_iter()
                    .map(|rep| run_replication(config, rep, estimator))
                    .collect();
                aggregate_cell(config, &outcomes, keep_estimates)
            })
            .collect()
    });
    Ok(McReport { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmdfm_core::simulation::{cell_grid, run_monte_carlo, DmdfmEstimator};

    #[test]
    fn matches_the_sequential_runner() {
        let grid = cell_grid(&SimulationConfig::sized(0, 0, 4, 11), &[(20, 5), (30, 6)]);
        let estimator = DmdfmEstimator::default();
        let sequential = run_monte_carlo(&grid, &estimator, true).unwrap();
        for jobs in [1, 3] {
            assert_eq!(run_monte_carlo_parallel(&grid, &estimator, true, jobs).unwrap(), sequential);
        }
    }
}
