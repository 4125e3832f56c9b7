//! Time-slotted baseline.
//!
//! Every slot has a local-entanglement phase of length `t_le`, a common
//! swapping phase, one source-destination round trip of signalling and the
//! corrections. The memory of each link direction is split into `q`
//! independent lanes; a lane delivers an ebit in a slot only if every link
//! produced a pair on it and every repeater's measurement succeeded.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use crate::engine::{EventKind, Scheduler};
use crate::error::ConfigError;
use crate::fidelity::{dephase, swap_fidelity, Fidelity};
use crate::network::Chain;
use crate::params::PhysicalParams;
use crate::rng::SimRng;
use crate::runtime::{run_replication, RunMetrics, Scenario};
use crate::time::SimTime;

/// Length of the local-entanglement phase that gives every lane success
/// probability `p_le` when a source of rate `epsg_rate` is shared by
/// `q_cells` lanes: `q · (−ln(1 − p_le) / rate)`.
pub fn derive_phase_duration(p_le: f64, epsg_rate: f64, q_cells: usize) -> Result<f64, ConfigError> {
    if !(p_le > 0.0 && p_le < 1.0) {
        return Err(ConfigError::OutOfRange {
            name: "p_le",
            reason: format!("must lie strictly between 0 and 1, got {p_le}"),
        });
    }
    if !(epsg_rate.is_finite() && epsg_rate > 0.0) {
        return Err(ConfigError::OutOfRange {
            name: "epsg_rate",
            reason: format!("must be positive, got {epsg_rate}"),
        });
    }
    if q_cells == 0 {
        return Err(ConfigError::OutOfRange {
            name: "cells_per_node",
            reason: "every link direction needs at least one cell".into(),
        });
    }
    Ok(q_cells as f64 * (-libm::log1p(-p_le) / epsg_rate))
}

/// Fixed slot layout of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotConfig {
    pub p_le: f64,
    /// Lanes per link.
    pub q_cells: usize,
    pub t_le: f64,
    pub bsm_duration: f64,
    /// Source-destination round trip.
    pub t_signal: f64,
    pub xz_duration: f64,
    pub t_slot: f64,
}

impl SlotConfig {
    pub fn new(p_le: f64, q_cells: usize, t_signal: f64, params: &PhysicalParams) -> Result<Self, ConfigError> {
        let t_le = derive_phase_duration(p_le, params.epsg_rate, q_cells)?;
        Ok(Self {
            p_le,
            q_cells,
            t_le,
            bsm_duration: params.bsm_duration,
            t_signal,
            xz_duration: params.xz_duration,
            t_slot: t_le + params.bsm_duration + t_signal + params.xz_duration,
        })
    }

    /// Lanes are limited by the smallest link-direction group on the chain.
    pub fn for_chain(chain: &Chain, params: &PhysicalParams, p_le: f64) -> Result<Self, ConfigError> {
        let rtt = 2.0 * chain.path_latency(chain.source(), chain.destination());
        Self::new(p_le, chain.min_group_size(), rtt, params)
    }

    /// Upper bound on the delivery rate: every lane succeeding in every slot.
    pub fn max_throughput(&self) -> f64 {
        self.q_cells as f64 / self.t_slot
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaneOutcome {
    Delivered(Fidelity),
    /// Some link produced no pair on this lane.
    LocalEntanglementFailed,
    BsmFailed,
}

/// Play one slot starting at `start` over a path of `n_links` links.
///
/// Pairs are born uniformly inside the local-entanglement window, every
/// repeater measures at the end of the swapping phase, and the corrections
/// finish at the end of the slot.
pub fn run_slot(
    n_links: usize,
    slot: &SlotConfig,
    params: &PhysicalParams,
    start: SimTime,
    rng: &mut SimRng,
) -> Vec<LaneOutcome> {
    assert!(n_links >= 1, "a path has at least one link");
    let t_bsm = start + (slot.t_le + slot.bsm_duration);
    let t_done = start + slot.t_slot;
    let mut births = Vec::with_capacity(n_links);
    (0..slot.q_cells)
        .map(|_| {
            if !(0..n_links).all(|_| rng.bernoulli(slot.p_le)) {
                return LaneOutcome::LocalEntanglementFailed;
            }
            births.clear();
            births.extend((0..n_links).map(|_| start + rng.uniform_in(0.0, slot.t_le)));
            if !(1..n_links).all(|_| rng.bernoulli(params.bsm_success_prob)) {
                return LaneOutcome::BsmFailed;
            }
            LaneOutcome::Delivered(slot_fidelity(&births, t_bsm, t_done, params))
        })
        .collect()
}

/// Delivered fidelity of a lane: every pair dephases from its birth to the
/// common measurement instant, the swaps fold in path order, and the result
/// dephases until the corrections complete.
pub fn slot_fidelity(births: &[SimTime], t_bsm: SimTime, t_done: SimTime, params: &PhysicalParams) -> Fidelity {
    if births.len() == 1 {
        return dephase(params.f_init, params.gamma, t_done.since(births[0]));
    }
    let at_bsm = |b: SimTime| dephase(params.f_init, params.gamma, t_bsm.since(b));
    let composite = births[1..]
        .iter()
        .fold(at_bsm(births[0]), |acc, &b| swap_fidelity(acc, at_bsm(b)));
    dephase(composite, params.composite_gamma(), t_done.since(t_bsm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SyncEvent {
    SlotBoundary { slot: u64 },
}

impl EventKind for SyncEvent {
    fn kind(&self) -> &'static str {
        "slot-boundary"
    }

    fn detail(&self, out: &mut dyn Write) -> fmt::Result {
        let SyncEvent::SlotBoundary { slot } = self;
        write!(out, "slot={slot}")
    }
}

pub struct SyncOutcome {
    pub metrics: RunMetrics,
    pub trace: Option<String>,
}

/// One replication of the slotted protocol.
pub struct SyncSim {
    sched: Scheduler<SyncEvent>,
    n_links: usize,
    params: PhysicalParams,
    slot: SlotConfig,
    t_end: SimTime,
    rng: SimRng,
    metrics: RunMetrics,
}

impl SyncSim {
    pub fn new(chain: Chain, params: PhysicalParams, slot: SlotConfig, duration_s: f64, seed: u64) -> Self {
        let n_links = chain.links().len();
        Self {
            sched: Scheduler::new(),
            n_links,
            params,
            slot,
            t_end: SimTime::from_secs(duration_s),
            rng: SimRng::seed_from_u64(seed),
            metrics: RunMetrics::new(duration_s, n_links, 0),
        }
    }

    pub fn enable_trace(&mut self) {
        self.sched.enable_trace();
    }

    pub fn slot(&self) -> &SlotConfig {
        &self.slot
    }

    /// Slots start back to back from time zero. Lanes of a slot that would
    /// finish after the horizon are counted as abandoned.
    pub fn run(mut self) -> SyncOutcome {
        self.sched.schedule(0.0, SyncEvent::SlotBoundary { slot: 0 });
        let t_end = self.t_end;
        let mut sched = core::mem::take(&mut self.sched);
        sched.run_until(t_end, |s, SyncEvent::SlotBoundary { slot }| {
            let start = s.now();
            let lanes = self.slot.q_cells as u64;
            self.metrics.attempts += lanes;
            if start + self.slot.t_slot > t_end {
                self.metrics.abandoned += lanes;
                return;
            }
            let outcomes = run_slot(self.n_links, &self.slot, &self.params, start, &mut self.rng);
            self.record(&outcomes);
            s.schedule(self.slot.t_slot, SyncEvent::SlotBoundary { slot: slot + 1 });
        });
        self.metrics.events = sched.dispatched();
        SyncOutcome {
            metrics: self.metrics,
            trace: sched.take_trace(),
        }
    }

    fn record(&mut self, outcomes: &[LaneOutcome]) {
        for o in outcomes {
            match *o {
                LaneOutcome::Delivered(f) => self.metrics.record_delivery(f),
                LaneOutcome::LocalEntanglementFailed => self.metrics.failures_le += 1,
                LaneOutcome::BsmFailed => self.metrics.failures_bsm += 1,
            }
        }
    }
}

/// Result of scanning the local-entanglement probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best_p: f64,
    pub best_throughput: f64,
    /// Mean throughput per grid point, in grid order.
    pub points: Vec<(f64, f64)>,
}

/// Mean throughput of `base` over `seeds` at every `p_le` in `grid`; the
/// first maximum wins ties.
pub fn sweep_optimal_p(base: &Scenario, grid: &[f64], seeds: &[u64]) -> Result<SweepResult, ConfigError> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(ConfigError::OutOfRange {
            name: "p_le",
            reason: "the sweep needs at least one grid point and one seed".into(),
        });
    }
    let mut points = Vec::with_capacity(grid.len());
    for &p in grid {
        let mut scenario = base.clone();
        scenario.p_le = Some(p);
        let mut total = 0.0;
        for &seed in seeds {
            total += run_replication(&scenario, seed)?.throughput();
        }
        points.push((p, total / seeds.len() as f64));
    }
    let (best_p, best_throughput) = points
        .iter()
        .copied()
        .fold(points[0], |best, pt| if pt.1 > best.1 { pt } else { best });
    Ok(SweepResult {
        best_p,
        best_throughput,
        points,
    })
}
