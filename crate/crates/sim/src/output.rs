//! CSV schema and file layout of an experiment directory.
//!
//! ```text
//! <out>/runs.csv        one row per (grid point, replication)
//! <out>/summary.csv     one row per grid point, `_mean` and `_ci95` columns
//! <out>/links.csv       per-link memory counters of every replication
//! <out>/trace/p<g>_r<r>.log     engine trace, with --trace
//! <out>/messages/p<g>_r<r>.log  protocol messages, with --dump-messages
//! ```
//!
//! Column order is fixed. Absent values (the fidelity of a run that delivered
//! nothing, `p_le` of a HOPPER point, a CI of one replication) are empty
//! cells. Floats use Rust's shortest round-trip formatting.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::experiment::{ExperimentResult, GridPoint, PointSummary};
use crate::stats::Estimate;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

const POINT_COLUMNS: &[&str] = &[
    "protocol",
    "point",
    "n_repeaters",
    "link_length_m",
    "cells_per_node",
    "cells_per_direction",
    "n_applications",
    "p_le",
];

pub const RUN_METRIC_COLUMNS: &[&str] = &[
    "replication",
    "seed",
    "duration_s",
    "attempts",
    "successes",
    "failures_stale",
    "failures_bsm",
    "failures_le",
    "abandoned",
    "throughput",
    "fidelity_mean",
    "fidelity_min",
    "low_fidelity",
    "source_wait_mean",
    "source_wait_max",
    "relay_wait_mean",
    "relay_wait_max",
    "events",
];

/// Metrics aggregated in summary.csv, each as `<name>_mean` and `<name>_ci95`.
pub const SUMMARY_METRICS: &[&str] = &[
    "throughput",
    "fidelity",
    "attempts",
    "successes",
    "failures_stale",
    "failures_bsm",
    "failures_le",
    "abandoned",
    "low_fidelity",
];

pub const LINK_COLUMNS: &[&str] = &[
    "replication",
    "link",
    "generated",
    "master_stored",
    "master_overwritten",
    "master_dropped",
    "slave_stored",
    "slave_overwritten",
    "slave_dropped",
];

pub fn runs_header() -> Vec<String> {
    POINT_COLUMNS
        .iter()
        .chain(RUN_METRIC_COLUMNS)
        .map(|s| s.to_string())
        .collect()
}

pub fn summary_header() -> Vec<String> {
    let mut h: Vec<String> = POINT_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.push("n_replications".into());
    for m in SUMMARY_METRICS {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_ci95"));
    }
    h.push("best_p".into());
    h.push("is_best_p".into());
    h
}

pub fn links_header() -> Vec<String> {
    POINT_COLUMNS
        .iter()
        .chain(LINK_COLUMNS)
        .map(|s| s.to_string())
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn point_fields(p: &GridPoint) -> Vec<String> {
    let s = &p.scenario;
    vec![
        s.protocol.as_str().to_owned(),
        p.index.to_string(),
        s.n_repeaters.to_string(),
        s.link_length_m.to_string(),
        s.cells_per_node.to_string(),
        p.cells_per_direction.to_string(),
        s.n_applications.to_string(),
        opt(s.p_le),
    ]
}

pub fn write_runs<W: Write>(w: W, result: &ExperimentResult) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(runs_header())?;
    for rep in &result.replications {
        let m = &rep.output.metrics;
        let mut row = point_fields(&result.points[rep.point]);
        row.extend([
            rep.replication.to_string(),
            rep.seed.to_string(),
            m.duration_s.to_string(),
            m.attempts.to_string(),
            m.successes.to_string(),
            m.failures_stale.to_string(),
            m.failures_bsm.to_string(),
            m.failures_le.to_string(),
            m.abandoned.to_string(),
            m.throughput().to_string(),
            opt(m.mean_fidelity()),
            opt(m.fidelity_min),
            m.low_fidelity.to_string(),
            opt(m.source_wait.mean()),
            m.source_wait.max_s.to_string(),
            opt(m.relay_wait.mean()),
            m.relay_wait.max_s.to_string(),
            m.events.to_string(),
        ]);
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(w: W, summaries: &[PointSummary]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(summary_header())?;
    for s in summaries {
        let mut row = point_fields(&s.point);
        row.push(s.n_replications.to_string());
        let estimates: [Option<&Estimate>; 9] = [
            Some(&s.throughput),
            s.fidelity.as_ref(),
            Some(&s.attempts),
            Some(&s.successes),
            Some(&s.failures_stale),
            Some(&s.failures_bsm),
            Some(&s.failures_le),
            Some(&s.abandoned),
            Some(&s.low_fidelity),
        ];
        for e in estimates {
            row.push(opt(e.map(|e| e.mean)));
            row.push(opt(e.and_then(|e| e.ci95)));
        }
        row.push(opt(s.best_p));
        row.push(if s.best_p.is_some() {
            s.is_best_p.to_string()
        } else {
            String::new()
        });
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_links<W: Write>(w: W, result: &ExperimentResult) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(links_header())?;
    for rep in &result.replications {
        let point = point_fields(&result.points[rep.point]);
        for (j, l) in rep.output.metrics.links.iter().enumerate() {
            let mut row = point.clone();
            row.extend([
                rep.replication.to_string(),
                j.to_string(),
                l.generated.to_string(),
                l.master.stored.to_string(),
                l.master.overwritten.to_string(),
                l.master.dropped.to_string(),
                l.slave.stored.to_string(),
                l.slave.overwritten.to_string(),
                l.slave.dropped.to_string(),
            ]);
            out.write_record(row)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<fs::File, OutputError> {
    fs::File::create(path).map_err(|source| OutputError::Io {
        path: path.to_owned(),
        source,
    })
}

fn csv_file(dir: &Path, name: &str, write: impl FnOnce(fs::File) -> csv::Result<()>) -> Result<PathBuf, OutputError> {
    let path = dir.join(name);
    write(create(&path)?).map_err(|source| OutputError::Csv {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn log_files(
    dir: &Path,
    sub: &str,
    result: &ExperimentResult,
    pick: impl Fn(&hopper_core::RunOutput) -> Option<&String>,
) -> Result<(), OutputError> {
    let sub_dir = dir.join(sub);
    let mut created = false;
    for rep in &result.replications {
        let Some(text) = pick(&rep.output) else {
            continue;
        };
        if !created {
            fs::create_dir_all(&sub_dir).map_err(|source| OutputError::Io {
                path: sub_dir.clone(),
                source,
            })?;
            created = true;
        }
        let path = sub_dir.join(format!("p{}_r{}.log", rep.point, rep.replication));
        fs::write(&path, text).map_err(|source| OutputError::Io { path, source })?;
    }
    Ok(())
}

/// Write all CSVs, plus any traces and message dumps the run produced.
/// Returns the CSV paths.
pub fn write_experiment(
    dir: &Path,
    result: &ExperimentResult,
    summaries: &[PointSummary],
) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let files = vec![
        csv_file(dir, "runs.csv", |f| write_runs(f, result))?,
        csv_file(dir, "summary.csv", |f| write_summary(f, summaries))?,
        csv_file(dir, "links.csv", |f| write_links(f, result))?,
    ];
    log_files(dir, "trace", result, |o| o.trace.as_ref())?;
    log_files(dir, "messages", result, |o| o.messages.as_ref())?;
    Ok(files)
}
