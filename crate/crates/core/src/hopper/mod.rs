//! Asynchronous hop-by-hop establishment.
//!
//! The source locks a Master cell on its first link and sends an `EsReq`
//! naming the mirror Slave cell at the next hop. Every repeater locks that
//! Slave cell, picks its own Master cell towards the successor (waiting for
//! one if none is Valid), swaps, and forwards the request with the measured
//! bits appended. The destination applies the corrections and reports back
//! with `EsRemComp`. A stale cell or a failed swap sends `EsRemFail` to the
//! source, which frees its cell and retries under a fresh attempt id.
//!
//! The whole run is single threaded and driven by [`Scheduler`]. At the end
//! of the horizon pair generation stops, queued waiters are released and the
//! remaining messages are drained so that every locked cell gets freed.

mod message;

pub use message::{CellClaim, EsFree, EsRemComp, EsRemFail, EsReq, FailCause, FiveTuple, Message};

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use crate::engine::{EventHandle, EventKind, Scheduler};
use crate::fidelity::{dephase, Fidelity};
use crate::network::{Chain, LinkId, NodeId, PortId, Role};
use crate::params::PhysicalParams;
use crate::physical::{
    attempt_bsm, next_generation, BsmResult, CellState, LinkCounters, LockOutcome, NodeMemory, StoredHalf,
};
use crate::rng::SimRng;
use crate::runtime::{Application, RunMetrics};
use crate::time::SimTime;

/// Knobs of one protocol run that are not physical parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HopperConfig {
    pub n_applications: usize,
    pub duration_s: f64,
    /// Time an application keeps a delivered ebit before releasing the end
    /// cells and asking for the next one.
    pub hold_time: f64,
    /// Run the pair sources. Disabled only by scripted tests that preload
    /// the memories.
    pub generation: bool,
    pub trace: bool,
    pub dump_messages: bool,
    /// Track consumed pair halves and fail loudly on reuse.
    pub audit: bool,
    pub record_deliveries: bool,
    pub slave_lookup: SlaveLookup,
}

/// How a node resolves the Slave cell named in an incoming request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlaveLookup {
    /// Only the named cell is considered; it must still hold the pair.
    CellIndex,
    /// The named cell is tried first, then any Valid cell of the group that
    /// holds the same pair. Absorption by the two endpoints of a link drifts
    /// apart as soon as one side frees a cell earlier than the other, and this
    /// keeps that drift from turning into a failure when the pair itself is
    /// still stored.
    #[default]
    PairId,
}

impl Default for HopperConfig {
    fn default() -> Self {
        Self {
            n_applications: 1,
            duration_s: 60.0,
            hold_time: 0.0,
            generation: true,
            trace: false,
            dump_messages: false,
            audit: false,
            record_deliveries: false,
            slave_lookup: SlaveLookup::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptState {
    Pending,
    Established,
    Failed,
}

/// Timestamps needed to recompute an attempt's delivered fidelity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timeline {
    /// Birth and initial fidelity of the pair used on each link, in path order.
    pub pair_births: Vec<(SimTime, Fidelity)>,
    /// Completion instant of each successful swap, in path order.
    pub bsm_times: Vec<SimTime>,
    /// Correction-completion instant and delivered fidelity.
    pub delivered: Option<(SimTime, Fidelity)>,
}

/// Bookkeeping of one live attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub tuple: FiveTuple,
    pub app: usize,
    pub started: SimTime,
    /// Lock token stamped on every cell this attempt holds.
    serial: u64,
    source_cell: Option<(usize, u64)>,
    pub state: AttemptState,
    composite: Option<(Fidelity, SimTime)>,
    pub timeline: Timeline,
    resolved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryRecord {
    pub tuple: FiveTuple,
    pub app: usize,
    pub timeline: Timeline,
}

/// Everything a finished run hands back.
#[derive(Debug, Clone, PartialEq)]
pub struct HopperOutcome {
    pub metrics: RunMetrics,
    pub trace: Option<String>,
    pub messages: Option<String>,
    pub deliveries: Vec<DeliveryRecord>,
}

/// Invariant violated at the end of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditFailure {
    OrphanUsedCell {
        node: NodeId,
        link: LinkId,
        role: Role,
        cell: usize,
    },
    LiveAttempts(usize),
    QueuedWaiters(usize),
    Unbalanced {
        attempts: u64,
        resolved: u64,
    },
    LinkCountersNotConserved(LinkId),
    AppCountersMismatch {
        per_app: u64,
        successes: u64,
    },
}

impl fmt::Display for AuditFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditFailure::OrphanUsedCell { node, link, role, cell } => {
                write!(f, "cell {cell} of {node} ({role:?} on {link}) still Used after drain")
            }
            AuditFailure::LiveAttempts(n) => write!(f, "{n} attempts still live after drain"),
            AuditFailure::QueuedWaiters(n) => write!(f, "{n} waiters still queued after drain"),
            AuditFailure::Unbalanced { attempts, resolved } => {
                write!(f, "{attempts} attempts but {resolved} outcomes")
            }
            AuditFailure::LinkCountersNotConserved(l) => write!(f, "absorption counters of {l} do not add up"),
            AuditFailure::AppCountersMismatch { per_app, successes } => {
                write!(
                    f,
                    "applications completed {per_app} ebits but {successes} successes were counted"
                )
            }
        }
    }
}

/// Swap whose Bell measurement completes at the event time.
#[derive(Debug, Clone, PartialEq)]
struct PendingBsm {
    node: NodeId,
    slave_cell: usize,
    master_cell: usize,
    req: EsReq,
}

#[derive(Debug, Clone, PartialEq)]
enum Event {
    AppRequest {
        app: usize,
    },
    PairArrival {
        link: LinkId,
    },
    Deliver {
        from: NodeId,
        to: NodeId,
        msg: Box<Message>,
    },
    BsmComplete(Box<PendingBsm>),
    XzComplete {
        node: NodeId,
        cell: usize,
        tuple: FiveTuple,
    },
    ReleaseDestination {
        node: NodeId,
        cell: usize,
    },
    ReleaseSource {
        app: usize,
        cell: usize,
    },
    SimEnd,
}

impl EventKind for Event {
    fn kind(&self) -> &'static str {
        match self {
            Event::AppRequest { .. } => "app-request",
            Event::PairArrival { .. } => "pair-arrival",
            Event::Deliver { .. } => "message-delivery",
            Event::BsmComplete(_) => "bsm-complete",
            Event::XzComplete { .. } => "xz-complete",
            Event::ReleaseDestination { .. } | Event::ReleaseSource { .. } => "app-release",
            Event::SimEnd => "sim-end",
        }
    }

    fn detail(&self, out: &mut dyn Write) -> fmt::Result {
        match self {
            Event::AppRequest { app } => write!(out, "app={app}"),
            Event::PairArrival { link } => write!(out, "{link}"),
            Event::Deliver { from, to, msg } => {
                write!(out, "{} {} {from}->{to}", msg.type_name(), msg.tuple())
            }
            Event::BsmComplete(p) => write!(
                out,
                "{} {} slave={} master={}",
                p.node, p.req.tuple, p.slave_cell, p.master_cell
            ),
            Event::XzComplete { node, cell, tuple } => write!(out, "{node} {tuple} cell={cell}"),
            Event::ReleaseDestination { node, cell } => write!(out, "{node} cell={cell}"),
            Event::ReleaseSource { app, cell } => write!(out, "app={app} cell={cell}"),
            Event::SimEnd => Ok(()),
        }
    }
}

/// Continuation parked until a Master cell towards the successor turns Valid.
#[derive(Debug, Clone, PartialEq)]
enum Waiter {
    Source {
        tuple: FiveTuple,
        since: SimTime,
    },
    Relay {
        req: EsReq,
        slave_cell: usize,
        since: SimTime,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Success(Fidelity),
    Failure(FailCause),
}

/// One replication of the protocol over a chain.
pub struct HopperSim {
    sched: Scheduler<Event>,
    chain: Chain,
    params: PhysicalParams,
    config: HopperConfig,
    rng: SimRng,
    path: Vec<NodeId>,
    memories: Vec<NodeMemory>,
    next_pair_seq: Vec<u64>,
    arrivals: Vec<Option<EventHandle>>,
    apps: Vec<Application>,
    attempts: BTreeMap<FiveTuple, Attempt>,
    next_serial: u64,
    waiters: Vec<VecDeque<Waiter>>,
    metrics: RunMetrics,
    t_end: SimTime,
    draining: bool,
    messages: Option<String>,
    consumed: BTreeSet<(LinkId, u64, Role)>,
    deliveries: Vec<DeliveryRecord>,
}

impl HopperSim {
    pub fn new(chain: Chain, params: PhysicalParams, config: HopperConfig, seed: u64) -> Self {
        let path = chain
            .shortest_path(chain.source(), chain.destination())
            .expect("a chain always connects its end nodes");
        let memories = chain
            .nodes()
            .iter()
            .map(|n| NodeMemory::from_specs(&n.groups))
            .collect();
        let n_links = chain.links().len();
        let n_nodes = chain.nodes().len();
        let (src, dst) = (chain.source(), chain.destination());
        let apps = (0..config.n_applications)
            .map(|i| Application::new(i, src, PortId(i as u32), dst, PortId(i as u32)))
            .collect();
        let mut sched = Scheduler::new();
        if config.trace {
            sched.enable_trace();
        }
        let metrics = RunMetrics::new(config.duration_s, n_links, config.n_applications);
        Self {
            sched,
            params,
            rng: SimRng::seed_from_u64(seed),
            path,
            memories,
            next_pair_seq: alloc::vec![0; n_links],
            arrivals: alloc::vec![None; n_links],
            apps,
            attempts: BTreeMap::new(),
            next_serial: 0,
            waiters: alloc::vec![VecDeque::new(); n_nodes],
            metrics,
            t_end: SimTime::from_secs(config.duration_s),
            draining: false,
            messages: config.dump_messages.then(String::new),
            consumed: BTreeSet::new(),
            deliveries: Vec::new(),
            chain,
            config,
        }
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn memory(&self, node: NodeId) -> &NodeMemory {
        &self.memories[node.index()]
    }

    /// Store `count` fresh pairs on `link` at the current time, on both
    /// endpoints, as if they had just arrived.
    pub fn preload(&mut self, link: LinkId, count: usize) {
        for _ in 0..count {
            self.absorb_pair(link);
        }
    }

    /// Run to the horizon, drain, and return the collected results.
    pub fn run(mut self) -> HopperOutcome {
        if self.config.generation {
            for j in 0..self.chain.links().len() {
                let link = LinkId(j as u32);
                let delay = self.chain.pair_arrival_latency(link)
                    + next_generation(self.chain.link(link).epsg_rate, &mut self.rng);
                self.arrivals[j] = Some(self.sched.schedule(delay, Event::PairArrival { link }));
            }
        }
        for app in 0..self.apps.len() {
            self.sched.schedule(0.0, Event::AppRequest { app });
        }
        self.sched.schedule_at(self.t_end, Event::SimEnd);

        let horizon = SimTime::from_secs(f64::MAX);
        while let Some(event) = self.sched.next_until(horizon) {
            self.dispatch(event);
        }
        self.metrics.events = self.sched.dispatched();
        self.metrics.per_app = self.apps.iter().map(|a| a.ebits_completed).collect();
        if let Err(e) = self.audit() {
            panic!("end-of-run audit failed: {e}");
        }
        HopperOutcome {
            metrics: self.metrics,
            trace: self.sched.take_trace(),
            messages: self.messages,
            deliveries: self.deliveries,
        }
    }

    /// Check the end-of-run invariants. Only meaningful once the queue is empty.
    pub fn audit(&self) -> Result<(), AuditFailure> {
        for (n, mem) in self.memories.iter().enumerate() {
            for g in mem.groups() {
                if let Some(cell) = g.cells().iter().position(|c| c.state() == CellState::Used) {
                    return Err(AuditFailure::OrphanUsedCell {
                        node: NodeId(n as u32),
                        link: g.link(),
                        role: g.role(),
                        cell,
                    });
                }
            }
        }
        if !self.attempts.is_empty() {
            return Err(AuditFailure::LiveAttempts(self.attempts.len()));
        }
        let queued: usize = self.waiters.iter().map(VecDeque::len).sum();
        if queued > 0 {
            return Err(AuditFailure::QueuedWaiters(queued));
        }
        let m = &self.metrics;
        if m.resolved() != m.attempts {
            return Err(AuditFailure::Unbalanced {
                attempts: m.attempts,
                resolved: m.resolved(),
            });
        }
        for (j, c) in m.links.iter().enumerate() {
            if !c.is_conserved() {
                return Err(AuditFailure::LinkCountersNotConserved(LinkId(j as u32)));
            }
        }
        let per_app: u64 = self.apps.iter().map(|a| a.ebits_completed).sum();
        if per_app != m.successes {
            return Err(AuditFailure::AppCountersMismatch {
                per_app,
                successes: m.successes,
            });
        }
        Ok(())
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::AppRequest { app } => self.start_attempt(app),
            Event::PairArrival { link } => self.on_pair_arrival(link),
            Event::Deliver { from: _, to, msg } => match *msg {
                Message::EsReq(m) => self.on_es_req(to, m),
                Message::EsRemComp(m) => self.on_es_rem_comp(to, m),
                Message::EsRemFail(m) => self.on_es_rem_fail(to, m),
                Message::EsFree(m) => self.on_es_free(to, m),
            },
            Event::BsmComplete(p) => self.on_bsm_complete(*p),
            Event::XzComplete { node, cell, tuple } => self.on_xz_complete(node, cell, tuple),
            Event::ReleaseDestination { node, cell } => {
                let link = self
                    .chain
                    .upstream_link(node)
                    .expect("destination has an upstream link");
                self.memories[node.index()].group_mut(link, Role::Slave).free(cell);
            }
            Event::ReleaseSource { app, cell } => {
                self.free_source_cell(cell);
                self.start_attempt(app);
            }
            Event::SimEnd => self.begin_drain(),
        }
    }

    // ---- physical layer -------------------------------------------------

    fn on_pair_arrival(&mut self, link: LinkId) {
        debug_assert!(!self.draining);
        let master_cell = self.absorb_pair(link);
        let gap = next_generation(self.chain.link(link).epsg_rate, &mut self.rng);
        self.arrivals[link.index()] = Some(self.sched.schedule(gap, Event::PairArrival { link }));
        let master = self.chain.link(link).endpoints.0;
        if let Some(cell) = master_cell {
            if let Some(w) = self.waiters[master.index()].pop_front() {
                self.bind(master, cell, w);
            }
        }
    }

    /// Hand a new pair to both endpoints. Returns the Master cell now holding it.
    fn absorb_pair(&mut self, link: LinkId) -> Option<usize> {
        let seq = self.next_pair_seq[link.index()];
        self.next_pair_seq[link.index()] += 1;
        let half = StoredHalf {
            pair_seq: seq,
            birth: self.sched.now(),
            f_init: self.params.f_init,
        };
        let (master, slave) = self.chain.link(link).endpoints;
        let om = self.memories[master.index()].group_mut(link, Role::Master).absorb(half);
        let os = self.memories[slave.index()].group_mut(link, Role::Slave).absorb(half);
        let counters: &mut LinkCounters = &mut self.metrics.links[link.index()];
        counters.generated += 1;
        counters.master.record(om);
        counters.slave.record(os);
        om.cell()
    }

    fn consume(&mut self, link: LinkId, seq: u64, role: Role) {
        if self.config.audit {
            assert!(
                self.consumed.insert((link, seq, role)),
                "pair {seq} on {link} ({role:?} half) consumed twice"
            );
        }
    }

    // ---- attempt lifecycle -----------------------------------------------

    fn start_attempt(&mut self, app: usize) {
        if self.draining {
            return;
        }
        let a = &mut self.apps[app];
        let tuple = FiveTuple {
            src_node: a.src,
            src_port: a.src_port,
            dst_node: a.dst,
            dst_port: a.dst_port,
            attempt_id: a.next_attempt_id,
        };
        a.next_attempt_id += 1;
        a.outstanding = true;
        let serial = self.next_serial;
        self.next_serial += 1;
        let previous = self.attempts.insert(
            tuple,
            Attempt {
                tuple,
                app,
                started: self.sched.now(),
                serial,
                source_cell: None,
                state: AttemptState::Pending,
                composite: None,
                timeline: Timeline::default(),
                resolved: false,
            },
        );
        assert!(previous.is_none(), "duplicate five-tuple {tuple}");
        self.metrics.attempts += 1;
        let since = self.sched.now();
        self.acquire_master(tuple.src_node, Waiter::Source { tuple, since });
    }

    /// Lock the youngest Valid Master cell towards the successor, or queue.
    fn acquire_master(&mut self, node: NodeId, waiter: Waiter) {
        let link = self.chain.downstream_link(node).expect("node has a successor");
        match self.memories[node.index()].group(link, Role::Master).youngest_valid() {
            Some(cell) => self.bind(node, cell, waiter),
            None => self.waiters[node.index()].push_back(waiter),
        }
    }

    fn bind(&mut self, node: NodeId, cell: usize, waiter: Waiter) {
        let link = self.chain.downstream_link(node).expect("node has a successor");
        let tuple = match &waiter {
            Waiter::Source { tuple, .. } => *tuple,
            Waiter::Relay { req, .. } => req.tuple,
        };
        let attempt = self.attempts.get_mut(&tuple).expect("waiting attempt is live");
        let group = self.memories[node.index()].group_mut(link, Role::Master);
        let half = *group.cell(cell).half().expect("bound cell is Valid");
        let locked = group.lock(cell, half.pair_seq, attempt.serial);
        assert_eq!(locked, LockOutcome::Locked, "master cell {cell} at {node} not lockable");
        attempt.timeline.pair_births.push((half.birth, half.f_init));
        let claim = CellClaim {
            cell_index: cell,
            pair_seq: half.pair_seq,
        };
        let now = self.sched.now();
        match waiter {
            Waiter::Source { since, .. } => {
                self.metrics.source_wait.record(now.since(since));
                attempt.source_cell = Some((cell, half.pair_seq));
                let req = EsReq {
                    tuple,
                    path: self.path[1..].to_vec(),
                    upstream_cell: claim,
                    corrections: Vec::new(),
                };
                self.send(node, self.path[1], Message::EsReq(req));
            }
            Waiter::Relay { req, slave_cell, since } => {
                self.metrics.relay_wait.record(now.since(since));
                let pending = PendingBsm {
                    node,
                    slave_cell,
                    master_cell: cell,
                    req,
                };
                self.sched
                    .schedule(self.params.bsm_duration, Event::BsmComplete(Box::new(pending)));
            }
        }
    }

    /// Record the final outcome of an attempt exactly once.
    fn resolve(&mut self, tuple: FiveTuple, outcome: Outcome) {
        let draining = self.draining;
        let attempt = self.attempts.get_mut(&tuple).expect("resolving a live attempt");
        assert!(!attempt.resolved, "attempt {tuple} resolved twice");
        attempt.resolved = true;
        let m = &mut self.metrics;
        match outcome {
            _ if draining => {
                attempt.state = AttemptState::Failed;
                m.abandoned += 1;
            }
            Outcome::Success(f) => {
                attempt.state = AttemptState::Established;
                m.record_delivery(f);
                self.apps[attempt.app].ebits_completed += 1;
            }
            Outcome::Failure(cause) => {
                attempt.state = AttemptState::Failed;
                match cause {
                    FailCause::StaleCell => m.failures_stale += 1,
                    FailCause::Bsm => m.failures_bsm += 1,
                    FailCause::Abandoned => m.abandoned += 1,
                }
            }
        }
    }

    fn fail(&mut self, at: NodeId, tuple: FiveTuple, cause: FailCause) {
        let cause = if self.draining { FailCause::Abandoned } else { cause };
        self.resolve(tuple, Outcome::Failure(cause));
        let msg = Message::EsRemFail(EsRemFail {
            tuple,
            failing_node: at,
            cause,
        });
        self.send(at, tuple.src_node, msg);
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: Message) {
        if let Some(out) = self.messages.as_mut() {
            let _ = write!(
                out,
                "{}\t{}\t{}\t{from}->{to}\t",
                self.sched.now(),
                msg.type_name(),
                msg.tuple()
            );
            let _ = msg.write_detail(out);
            out.push('\n');
        }
        let latency = self.chain.path_latency(from, to);
        self.sched.schedule(
            latency,
            Event::Deliver {
                from,
                to,
                msg: Box::new(msg),
            },
        );
    }

    // ---- handlers ----------------------------------------------------------

    fn on_es_req(&mut self, node: NodeId, req: EsReq) {
        assert_eq!(
            req.path.first(),
            Some(&node),
            "EsReq {} delivered to {node}, which is not next on its path",
            req.tuple
        );
        let tuple = req.tuple;
        if self.draining {
            self.fail(node, tuple, FailCause::Abandoned);
            return;
        }
        let link = self
            .chain
            .upstream_link(node)
            .expect("EsReq receiver has a predecessor");
        let serial = self.attempts[&tuple].serial;
        let claim = req.upstream_cell;
        let group = self.memories[node.index()].group_mut(link, Role::Slave);
        let cell = match self.config.slave_lookup {
            SlaveLookup::CellIndex => claim.cell_index,
            SlaveLookup::PairId => group
                .find_valid(claim.cell_index, claim.pair_seq)
                .unwrap_or(claim.cell_index),
        };
        if group.lock(cell, claim.pair_seq, serial) != LockOutcome::Locked {
            self.fail(node, tuple, FailCause::StaleCell);
            return;
        }
        if node == tuple.dst_node {
            assert_eq!(
                req.corrections.len(),
                self.chain.n_repeaters(),
                "EsReq {tuple} reached the destination with a wrong number of corrections"
            );
            self.sched
                .schedule(self.params.xz_duration, Event::XzComplete { node, cell, tuple });
        } else {
            let since = self.sched.now();
            self.acquire_master(
                node,
                Waiter::Relay {
                    req,
                    slave_cell: cell,
                    since,
                },
            );
        }
    }

    fn on_bsm_complete(&mut self, p: PendingBsm) {
        let PendingBsm {
            node,
            slave_cell,
            master_cell,
            mut req,
        } = p;
        let tuple = req.tuple;
        let up = self.chain.upstream_link(node).expect("repeater has a predecessor");
        let down = self.chain.downstream_link(node).expect("repeater has a successor");
        let mem = &mut self.memories[node.index()];
        let left_half = mem.group_mut(up, Role::Slave).free(slave_cell);
        let right_half = mem.group_mut(down, Role::Master).free(master_cell);
        let next = req.path[1];
        let down_claim = CellClaim {
            cell_index: master_cell,
            pair_seq: right_half.pair_seq,
        };
        if self.draining {
            self.send(
                node,
                next,
                Message::EsFree(EsFree {
                    tuple,
                    cell: down_claim,
                }),
            );
            self.fail(node, tuple, FailCause::Abandoned);
            return;
        }

        let now = self.sched.now();
        let gamma = self.params.gamma;
        let composite_gamma = self.params.composite_gamma();
        let attempt = self.attempts.get_mut(&tuple).expect("swapping for a live attempt");
        let left = match attempt.composite {
            None => dephase(left_half.f_init, gamma, now.since(left_half.birth)),
            Some((f, since)) => dephase(f, composite_gamma, now.since(since)),
        };
        let right = dephase(right_half.f_init, gamma, now.since(right_half.birth));
        match attempt_bsm(left, right, self.params.bsm_success_prob, &mut self.rng) {
            BsmResult::Success { bits, fidelity } => {
                attempt.composite = Some((fidelity, now));
                attempt.timeline.bsm_times.push(now);
                self.consume(up, left_half.pair_seq, Role::Slave);
                self.consume(down, right_half.pair_seq, Role::Master);
                req.corrections.push(bits);
                req.path.remove(0);
                req.upstream_cell = down_claim;
                self.send(node, next, Message::EsReq(req));
            }
            BsmResult::Failure => {
                self.send(
                    node,
                    next,
                    Message::EsFree(EsFree {
                        tuple,
                        cell: down_claim,
                    }),
                );
                self.fail(node, tuple, FailCause::Bsm);
            }
        }
    }

    fn on_xz_complete(&mut self, node: NodeId, cell: usize, tuple: FiveTuple) {
        let link = self.chain.upstream_link(node).expect("destination has a predecessor");
        let half = *self.memories[node.index()]
            .group(link, Role::Slave)
            .cell(cell)
            .half()
            .expect("destination cell held through the corrections");
        let now = self.sched.now();
        let gamma = self.params.gamma;
        let composite_gamma = self.params.composite_gamma();
        let attempt = self.attempts.get_mut(&tuple).expect("correcting a live attempt");
        let fidelity = match attempt.composite {
            None => dephase(half.f_init, gamma, now.since(half.birth)),
            Some((f, since)) => dephase(f, composite_gamma, now.since(since)),
        };
        attempt.timeline.delivered = Some((now, fidelity));
        let source_seq = attempt.source_cell.expect("source cell locked").1;
        let app = attempt.app;
        let draining = self.draining;
        if !draining {
            if self.config.record_deliveries {
                self.deliveries.push(DeliveryRecord {
                    tuple,
                    app,
                    timeline: attempt.timeline.clone(),
                });
            }
            self.consume(link, half.pair_seq, Role::Slave);
            self.consume(LinkId(0), source_seq, Role::Master);
        }
        self.resolve(tuple, Outcome::Success(fidelity));

        if self.config.hold_time > 0.0 && !draining {
            self.sched
                .schedule(self.config.hold_time, Event::ReleaseDestination { node, cell });
        } else {
            self.memories[node.index()].group_mut(link, Role::Slave).free(cell);
        }
        let msg = Message::EsRemComp(EsRemComp {
            tuple,
            completion_time: now,
            fidelity,
        });
        self.send(node, tuple.src_node, msg);
    }

    fn on_es_rem_comp(&mut self, node: NodeId, msg: EsRemComp) {
        debug_assert_eq!(node, msg.tuple.src_node);
        let Some(attempt) = self.attempts.remove(&msg.tuple) else {
            self.metrics.unknown_messages += 1;
            return;
        };
        let (cell, _) = attempt.source_cell.expect("completed attempt held a source cell");
        let app = attempt.app;
        self.apps[app].outstanding = false;
        if self.config.hold_time > 0.0 && !self.draining {
            self.sched
                .schedule(self.config.hold_time, Event::ReleaseSource { app, cell });
        } else {
            self.free_source_cell(cell);
            self.start_attempt(app);
        }
    }

    fn on_es_rem_fail(&mut self, node: NodeId, msg: EsRemFail) {
        debug_assert_eq!(node, msg.tuple.src_node);
        let Some(attempt) = self.attempts.remove(&msg.tuple) else {
            self.metrics.unknown_messages += 1;
            return;
        };
        if let Some((cell, _)) = attempt.source_cell {
            self.free_source_cell(cell);
        }
        self.apps[attempt.app].outstanding = false;
        self.start_attempt(attempt.app);
    }

    fn on_es_free(&mut self, node: NodeId, msg: EsFree) {
        let link = self
            .chain
            .upstream_link(node)
            .expect("EsFree receiver has a predecessor");
        let group = self.memories[node.index()].group_mut(link, Role::Slave);
        let found = match self.config.slave_lookup {
            SlaveLookup::CellIndex => group
                .find_valid(msg.cell.cell_index, msg.cell.pair_seq)
                .filter(|&c| c == msg.cell.cell_index),
            SlaveLookup::PairId => group.find_valid(msg.cell.cell_index, msg.cell.pair_seq),
        };
        match found {
            Some(cell) => {
                group.free(cell);
            }
            None => self.metrics.ignored_frees += 1,
        }
    }

    fn free_source_cell(&mut self, cell: usize) {
        let src = self.chain.source();
        let link = self.chain.downstream_link(src).expect("source has a successor");
        self.memories[src.index()].group_mut(link, Role::Master).free(cell);
    }

    /// Stop generation and requests; release every parked continuation.
    fn begin_drain(&mut self) {
        self.draining = true;
        for h in self.arrivals.iter_mut() {
            if let Some(h) = h.take() {
                self.sched.cancel(h);
            }
        }
        for n in 0..self.waiters.len() {
            let node = NodeId(n as u32);
            while let Some(w) = self.waiters[n].pop_front() {
                match w {
                    Waiter::Source { tuple, .. } => {
                        self.resolve(tuple, Outcome::Failure(FailCause::Abandoned));
                        let attempt = self.attempts.remove(&tuple).expect("queued attempt is live");
                        self.apps[attempt.app].outstanding = false;
                    }
                    Waiter::Relay { req, slave_cell, .. } => {
                        let link = self.chain.upstream_link(node).expect("relay has a predecessor");
                        self.memories[n].group_mut(link, Role::Slave).free(slave_cell);
                        self.fail(node, req.tuple, FailCause::Abandoned);
                    }
                }
            }
        }
    }
}
