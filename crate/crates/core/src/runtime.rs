//! Closed-loop workload, per-run metrics and the scenario entry point.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::ConfigError;
use crate::fidelity::Fidelity;
use crate::hopper::{HopperConfig, HopperSim, SlaveLookup};
use crate::network::{build_chain, NodeId, PortId};
use crate::params::PhysicalParams;
use crate::physical::LinkCounters;
use crate::sync::{SlotConfig, SyncSim};

/// A closed-loop application: exactly one outstanding ebit request, reissued
/// as soon as the previous one resolves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Application {
    pub id: usize,
    pub src: NodeId,
    pub src_port: PortId,
    pub dst: NodeId,
    pub dst_port: PortId,
    pub ebits_completed: u64,
    pub outstanding: bool,
    pub next_attempt_id: u64,
}

impl Application {
    pub fn new(id: usize, src: NodeId, src_port: PortId, dst: NodeId, dst_port: PortId) -> Self {
        Self {
            id,
            src,
            src_port,
            dst,
            dst_port,
            ebits_completed: 0,
            outstanding: false,
            next_attempt_id: 0,
        }
    }
}

/// Running count, sum and maximum of waiting times.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WaitStats {
    pub count: u64,
    pub total_s: f64,
    pub max_s: f64,
}

impl WaitStats {
    pub fn record(&mut self, wait_s: f64) {
        self.count += 1;
        self.total_s += wait_s;
        self.max_s = self.max_s.max(wait_s);
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.total_s / self.count as f64)
    }
}

/// Deliveries below this fidelity carry no usable entanglement.
pub const LOW_FIDELITY: f64 = 0.5;

/// Outcome counters of one replication.
///
/// Every attempt ends in exactly one of: success, a failure with a cause, or
/// abandonment at the end of the horizon.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub duration_s: f64,
    pub attempts: u64,
    pub successes: u64,
    pub failures_stale: u64,
    pub failures_bsm: u64,
    /// Slotted lanes whose local entanglement phase failed on some link.
    pub failures_le: u64,
    pub abandoned: u64,
    pub fidelity_sum: f64,
    pub fidelity_min: Option<f64>,
    pub low_fidelity: u64,
    pub links: Vec<LinkCounters>,
    pub source_wait: WaitStats,
    pub relay_wait: WaitStats,
    pub per_app: Vec<u64>,
    pub unknown_messages: u64,
    pub ignored_frees: u64,
    pub events: u64,
}

impl RunMetrics {
    pub fn new(duration_s: f64, n_links: usize, n_apps: usize) -> Self {
        Self {
            duration_s,
            links: alloc::vec![LinkCounters::default(); n_links],
            per_app: alloc::vec![0; n_apps],
            ..Self::default()
        }
    }

    pub fn record_delivery(&mut self, f: Fidelity) {
        let v = f.value();
        self.successes += 1;
        self.fidelity_sum += v;
        self.fidelity_min = Some(self.fidelity_min.map_or(v, |m| m.min(v)));
        if v < LOW_FIDELITY {
            self.low_fidelity += 1;
        }
    }

    /// Delivered ebits per second.
    pub fn throughput(&self) -> f64 {
        self.successes as f64 / self.duration_s
    }

    /// Mean delivered fidelity; `None` when nothing was delivered.
    pub fn mean_fidelity(&self) -> Option<f64> {
        (self.successes > 0).then(|| self.fidelity_sum / self.successes as f64)
    }

    pub fn failures(&self) -> u64 {
        self.failures_stale + self.failures_bsm + self.failures_le
    }

    /// Attempts with a recorded outcome.
    pub fn resolved(&self) -> u64 {
        self.successes + self.failures() + self.abandoned
    }

    pub fn attempts_per_success(&self) -> Option<f64> {
        (self.successes > 0).then(|| self.attempts as f64 / self.successes as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Sync,
    Hopper,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Sync => "sync",
            Protocol::Hopper => "hopper",
        }
    }
}

/// One fully specified simulation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub protocol: Protocol,
    pub n_repeaters: usize,
    pub link_length_m: f64,
    pub cells_per_node: usize,
    /// Closed-loop applications; the slotted protocol ignores it.
    pub n_applications: usize,
    /// Local-entanglement success target; slotted protocol only.
    pub p_le: Option<f64>,
    pub params: PhysicalParams,
    pub duration_s: f64,
    pub hold_time: f64,
    pub slave_lookup: SlaveLookup,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate()?;
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(ConfigError::OutOfRange {
                name: "duration_s",
                reason: alloc::format!("must be positive, got {}", self.duration_s),
            });
        }
        if !(self.hold_time.is_finite() && self.hold_time >= 0.0) {
            return Err(ConfigError::OutOfRange {
                name: "hold_time",
                reason: alloc::format!("must be non-negative, got {}", self.hold_time),
            });
        }
        match (self.protocol, self.p_le) {
            (Protocol::Sync, None) => Err(ConfigError::OutOfRange {
                name: "p_le",
                reason: "the slotted protocol needs a local-entanglement probability".into(),
            }),
            (Protocol::Sync, Some(p)) if !(p > 0.0 && p < 1.0) => Err(ConfigError::OutOfRange {
                name: "p_le",
                reason: alloc::format!("must lie strictly between 0 and 1, got {p}"),
            }),
            _ => Ok(()),
        }
    }

    pub fn hopper_config(&self) -> HopperConfig {
        HopperConfig {
            n_applications: self.n_applications,
            duration_s: self.duration_s,
            hold_time: self.hold_time,
            slave_lookup: self.slave_lookup,
            ..HopperConfig::default()
        }
    }
}

/// Optional logs of a replication.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub trace: bool,
    pub dump_messages: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// Engine dispatch log, one line per event.
    pub trace: Option<String>,
    /// Protocol message log; the slotted protocol sends no messages.
    pub messages: Option<String>,
}

/// Run one replication of `scenario` with the given seed.
pub fn run_replication(scenario: &Scenario, seed: u64) -> Result<RunMetrics, ConfigError> {
    run_replication_with(scenario, seed, RunOptions::default()).map(|o| o.metrics)
}

pub fn run_replication_with(scenario: &Scenario, seed: u64, options: RunOptions) -> Result<RunOutput, ConfigError> {
    scenario.validate()?;
    let chain = build_chain(
        scenario.n_repeaters,
        scenario.link_length_m,
        scenario.cells_per_node,
        &scenario.params,
    )?;
    match scenario.protocol {
        Protocol::Hopper => {
            let config = HopperConfig {
                trace: options.trace,
                dump_messages: options.dump_messages,
                ..scenario.hopper_config()
            };
            let out = HopperSim::new(chain, scenario.params, config, seed).run();
            Ok(RunOutput {
                metrics: out.metrics,
                trace: out.trace,
                messages: out.messages,
            })
        }
        Protocol::Sync => {
            let p_le = scenario.p_le.expect("validated");
            let slot = SlotConfig::for_chain(&chain, &scenario.params, p_le)?;
            let mut sim = SyncSim::new(chain, scenario.params, slot, scenario.duration_s, seed);
            if options.trace {
                sim.enable_trace();
            }
            let out = sim.run();
            Ok(RunOutput {
                metrics: out.metrics,
                trace: out.trace,
                messages: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wait_stats() {
        let mut w = WaitStats::default();
        assert_eq!(w.mean(), None);
        w.record(1.0);
        w.record(3.0);
        assert_eq!(w.mean(), Some(2.0));
        assert_eq!(w.max_s, 3.0);
    }

    #[test]
    fn metrics_accounting() {
        let mut m = RunMetrics::new(60.0, 4, 2);
        m.attempts = 5;
        m.record_delivery(Fidelity::new(0.9));
        m.record_delivery(Fidelity::new(0.4));
        m.failures_bsm = 1;
        m.failures_stale = 1;
        m.abandoned = 1;
        assert_eq!(m.resolved(), m.attempts);
        assert_eq!(m.low_fidelity, 1);
        assert!((m.mean_fidelity().unwrap() - 0.65).abs() < 1e-15);
        assert_eq!(m.fidelity_min, Some(0.4));
        assert!((m.throughput() - 2.0 / 60.0).abs() < 1e-15);
        assert_eq!(RunMetrics::new(1.0, 1, 0).mean_fidelity(), None);
    }

    fn hopper(apps: usize) -> Scenario {
        Scenario {
            protocol: Protocol::Hopper,
            n_repeaters: 3,
            link_length_m: 5e6,
            cells_per_node: 20,
            n_applications: apps,
            p_le: None,
            params: PhysicalParams::default(),
            duration_s: 2.0,
            hold_time: 0.0,
            slave_lookup: SlaveLookup::default(),
        }
    }

    #[test]
    fn zero_applications_deliver_nothing() {
        let m = run_replication(&hopper(0), 1).unwrap();
        assert_eq!(m.attempts, 0);
        assert_eq!(m.throughput(), 0.0);
        assert!(m.links.iter().all(|l| l.generated > 150));
    }

    #[test]
    fn scenario_validation() {
        let mut s = hopper(1);
        s.protocol = Protocol::Sync;
        assert!(s.validate().is_err());
        s.p_le = Some(1.0);
        assert!(s.validate().is_err());
        s.p_le = Some(0.5);
        assert!(s.validate().is_ok());
        s.duration_s = 0.0;
        assert!(s.validate().is_err());
    }
}
