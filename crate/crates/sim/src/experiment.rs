//! Grid expansion, seeding and parallel execution of replications.

use std::panic::{catch_unwind, AssertUnwindSafe};

use hopper_core::network::build_chain;
use hopper_core::{run_replication_with, ConfigError, Protocol, RunOptions, RunOutput, Scenario};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::stats::{estimate, Estimate};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("grid point {point}: {source}")]
    Scenario {
        point: usize,
        #[source]
        source: ConfigError,
    },
    #[error("replication {replication} of grid point {point} panicked (seed {seed}): {message}")]
    Panicked {
        point: usize,
        replication: usize,
        seed: u64,
        message: String,
    },
}

/// One combination of the sweep axes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub scenario: Scenario,
    /// Smallest memory group of the chain, i.e. cells per link direction.
    pub cells_per_direction: usize,
}

/// Expand the sweep lists in the order repeaters, memory, applications, p_le.
pub fn expand_grid(config: &ExperimentConfig) -> Result<Vec<GridPoint>, ExperimentError> {
    let p_axis: Vec<Option<f64>> = match config.protocol {
        Protocol::Hopper => vec![None],
        Protocol::Sync => config.p_le.iter().copied().map(Some).collect(),
    };
    let mut points = Vec::new();
    for &n in &config.n_repeaters {
        for &c in config.cells.values() {
            let cells_per_node = config.cells.cells_per_node(c, n);
            for &apps in &config.n_applications {
                for &p_le in &p_axis {
                    let index = points.len();
                    let chain = build_chain(n, config.link_length_m, cells_per_node, &config.params)
                        .map_err(|source| ExperimentError::Scenario { point: index, source })?;
                    points.push(GridPoint {
                        index,
                        scenario: Scenario {
                            protocol: config.protocol,
                            n_repeaters: n,
                            link_length_m: config.link_length_m,
                            cells_per_node,
                            n_applications: apps,
                            p_le,
                            params: config.params,
                            duration_s: config.duration_s,
                            hold_time: config.hold_time,
                            slave_lookup: config.slave_lookup,
                        },
                        cells_per_direction: chain.min_group_size(),
                    });
                }
            }
        }
    }
    Ok(points)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `replication` at grid point `point`.
///
/// The mix is a bijection of `(point, replication)` for indices below 2^32,
/// so no two units of one experiment share a stream.
pub fn replication_seed(base_seed: u64, point: usize, replication: usize) -> u64 {
    base_seed ^ splitmix64(((point as u64) << 32) | (replication as u64 & 0xffff_ffff))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub point: usize,
    pub replication: usize,
    pub seed: u64,
    pub output: RunOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub points: Vec<GridPoint>,
    /// Sorted by grid point, then replication.
    pub replications: Vec<Replication>,
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_owned()
    }
}

/// Run every replication of every grid point. Units run in parallel; the
/// result order does not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentResult, ExperimentError> {
    let points = expand_grid(config)?;
    let units: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|g| (0..config.n_replications).map(move |r| (g, r)))
        .collect();
    let replications = units
        .par_iter()
        .map(|&(g, r)| {
            let seed = replication_seed(config.base_seed, g, r);
            let scenario = &points[g].scenario;
            match catch_unwind(AssertUnwindSafe(|| run_replication_with(scenario, seed, options))) {
                Ok(Ok(output)) => Ok(Replication {
                    point: g,
                    replication: r,
                    seed,
                    output,
                }),
                Ok(Err(source)) => Err(ExperimentError::Scenario { point: g, source }),
                Err(payload) => Err(ExperimentError::Panicked {
                    point: g,
                    replication: r,
                    seed,
                    message: panic_message(payload.as_ref()),
                }),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentResult { points, replications })
}

/// Aggregates of one grid point over its replications.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub point: GridPoint,
    pub n_replications: usize,
    pub throughput: Estimate,
    /// Over replications that delivered at least one ebit.
    pub fidelity: Option<Estimate>,
    pub attempts: Estimate,
    pub successes: Estimate,
    pub failures_stale: Estimate,
    pub failures_bsm: Estimate,
    pub failures_le: Estimate,
    pub abandoned: Estimate,
    pub low_fidelity: Estimate,
    /// Highest-throughput `p_le` among points sharing this point's chain;
    /// slotted protocol only.
    pub best_p: Option<f64>,
    pub is_best_p: bool,
}

pub fn summarize(result: &ExperimentResult) -> Vec<PointSummary> {
    let mut out: Vec<PointSummary> = result
        .points
        .iter()
        .map(|point| {
            let reps: Vec<&RunOutput> = result
                .replications
                .iter()
                .filter(|r| r.point == point.index)
                .map(|r| &r.output)
                .collect();
            let over = |f: &dyn Fn(&RunOutput) -> f64| {
                let v: Vec<f64> = reps.iter().map(|o| f(o)).collect();
                estimate(&v).expect("at least one replication")
            };
            let fids: Vec<f64> = reps.iter().filter_map(|o| o.metrics.mean_fidelity()).collect();
            PointSummary {
                point: point.clone(),
                n_replications: reps.len(),
                throughput: over(&|o| o.metrics.throughput()),
                fidelity: estimate(&fids),
                attempts: over(&|o| o.metrics.attempts as f64),
                successes: over(&|o| o.metrics.successes as f64),
                failures_stale: over(&|o| o.metrics.failures_stale as f64),
                failures_bsm: over(&|o| o.metrics.failures_bsm as f64),
                failures_le: over(&|o| o.metrics.failures_le as f64),
                abandoned: over(&|o| o.metrics.abandoned as f64),
                low_fidelity: over(&|o| o.metrics.low_fidelity as f64),
                best_p: None,
                is_best_p: false,
            }
        })
        .collect();

    // Points of one chain are contiguous because p_le is the innermost axis.
    let mut start = 0;
    while start < out.len() {
        let key = chain_key(&out[start].point.scenario);
        let end = (start..out.len())
            .find(|&i| chain_key(&out[i].point.scenario) != key)
            .unwrap_or(out.len());
        if out[start].point.scenario.protocol == Protocol::Sync {
            let mut best = start;
            for i in start + 1..end {
                if out[i].throughput.mean > out[best].throughput.mean {
                    best = i;
                }
            }
            let best_p = out[best].point.scenario.p_le;
            for (i, s) in out.iter_mut().enumerate().take(end).skip(start) {
                s.best_p = best_p;
                s.is_best_p = i == best;
            }
        }
        start = end;
    }
    out
}

fn chain_key(s: &Scenario) -> (usize, usize, usize) {
    (s.n_repeaters, s.cells_per_node, s.n_applications)
}
