//! Link-level physics and the memory cell state machine.
//!
//! A cell moves `Empty -> Valid` when it absorbs a heralded photon,
//! `Valid -> Valid` when a newer photon overwrites it, `Valid -> Used` when the
//! Master side locks it for an establishment attempt, and back to `Empty` when
//! it is consumed or explicitly freed. `Used` cells are never overwritten.
//!
//! Both endpoints of a link run the same absorption rule on their mirrored
//! groups, in the same arrival order, without exchanging messages.

use alloc::vec::Vec;

use crate::fidelity::{swap_fidelity, Fidelity};
use crate::network::{GroupSpec, LinkId, Role};
use crate::rng::SimRng;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Empty,
    Valid,
    Used,
}

/// Local half of a link pair held in a memory cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoredHalf {
    /// Per-link sequence number, identical at both endpoints.
    pub pair_seq: u64,
    pub birth: SimTime,
    pub f_init: Fidelity,
}

/// Identifier of the establishment attempt holding a `Used` cell.
pub type OwnerToken = u64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    state: CellState,
    half: Option<StoredHalf>,
    owner: Option<OwnerToken>,
}

impl Cell {
    pub const EMPTY: Cell = Cell {
        state: CellState::Empty,
        half: None,
        owner: None,
    };

    pub fn state(&self) -> CellState {
        self.state
    }

    pub fn half(&self) -> Option<&StoredHalf> {
        self.half.as_ref()
    }

    pub fn owner(&self) -> Option<OwnerToken> {
        self.owner
    }

    /// A `Valid` cell holding `half`, as after a lock-free absorption.
    pub fn valid(half: StoredHalf) -> Cell {
        Cell {
            state: CellState::Valid,
            half: Some(half),
            owner: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbsorbOutcome {
    Stored(usize),
    Overwrote { cell: usize, old_pair_seq: u64 },
    Dropped,
}

impl AbsorbOutcome {
    /// Cell now holding the new half, if any.
    pub fn cell(self) -> Option<usize> {
        match self {
            AbsorbOutcome::Stored(c) | AbsorbOutcome::Overwrote { cell: c, .. } => Some(c),
            AbsorbOutcome::Dropped => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockOutcome {
    Locked,
    /// Valid, but holding another pair (it was overwritten).
    StaleMismatch {
        held: u64,
    },
    /// Empty or already Used.
    NotValid,
}

/// The cells of one node serving one link in one role. Cell indices are local
/// to the group: Master cell `i` mirrors Slave cell `i` across the link.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryGroup {
    link: LinkId,
    role: Role,
    cells: Vec<Cell>,
}

impl MemoryGroup {
    pub fn new(link: LinkId, role: Role, size: usize) -> Self {
        Self {
            link,
            role,
            cells: alloc::vec![Cell::EMPTY; size],
        }
    }

    pub fn from_cells(link: LinkId, role: Role, cells: Vec<Cell>) -> Self {
        Self { link, role, cells }
    }

    pub fn link(&self) -> LinkId {
        self.link
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, index: usize) -> &Cell {
        &self.cells[index]
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|c| c.state == state).count()
    }

    /// Store an arriving half: the lowest-index Empty cell if any, else
    /// overwrite the Valid cell with the oldest pair, else drop it.
    pub fn absorb(&mut self, half: StoredHalf) -> AbsorbOutcome {
        if let Some(i) = self.cells.iter().position(|c| c.state == CellState::Empty) {
            self.cells[i] = Cell::valid(half);
            return AbsorbOutcome::Stored(i);
        }
        let oldest = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.state == CellState::Valid)
            .min_by(|(_, a), (_, b)| birth(a).cmp(&birth(b)))
            .map(|(i, _)| i);
        match oldest {
            Some(i) => {
                let old_pair_seq = self.cells[i].half.expect("valid cell holds a half").pair_seq;
                self.cells[i] = Cell::valid(half);
                AbsorbOutcome::Overwrote { cell: i, old_pair_seq }
            }
            None => AbsorbOutcome::Dropped,
        }
    }

    /// Valid cell holding the most recently born pair; ties go to the lowest
    /// index.
    pub fn youngest_valid(&self) -> Option<usize> {
        let mut best: Option<(usize, SimTime)> = None;
        for (i, c) in self.cells.iter().enumerate() {
            if c.state == CellState::Valid {
                let b = birth(c);
                if best.is_none_or(|(_, bb)| b > bb) {
                    best = Some((i, b));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    /// Lock a Valid cell for `owner` if it still holds `expected_pair_seq`.
    pub fn lock(&mut self, index: usize, expected_pair_seq: u64, owner: OwnerToken) -> LockOutcome {
        let cell = &mut self.cells[index];
        match cell.state {
            CellState::Valid => {
                let held = cell.half.expect("valid cell holds a half").pair_seq;
                if held == expected_pair_seq {
                    cell.state = CellState::Used;
                    cell.owner = Some(owner);
                    LockOutcome::Locked
                } else {
                    LockOutcome::StaleMismatch { held }
                }
            }
            CellState::Empty | CellState::Used => LockOutcome::NotValid,
        }
    }

    /// Valid cell holding pair `pair_seq`, checking `hint` first.
    pub fn find_valid(&self, hint: usize, pair_seq: u64) -> Option<usize> {
        let holds = |c: &Cell| c.state == CellState::Valid && c.half.map(|h| h.pair_seq) == Some(pair_seq);
        if self.cells.get(hint).is_some_and(holds) {
            return Some(hint);
        }
        self.cells.iter().position(holds)
    }

    /// Release a Valid or Used cell, returning the half it held. Freeing an
    /// Empty cell is a protocol bug.
    pub fn free(&mut self, index: usize) -> StoredHalf {
        let cell = &mut self.cells[index];
        assert!(
            cell.state != CellState::Empty,
            "double free of {:?} cell {index} on {}",
            self.role,
            self.link
        );
        let half = cell.half.take().expect("occupied cell holds a half");
        *cell = Cell::EMPTY;
        half
    }
}

fn birth(c: &Cell) -> SimTime {
    c.half.map(|h| h.birth).unwrap_or(SimTime::ZERO)
}

/// All groups of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMemory {
    groups: Vec<MemoryGroup>,
}

impl NodeMemory {
    pub fn from_specs(specs: &[GroupSpec]) -> Self {
        Self {
            groups: specs
                .iter()
                .map(|s| MemoryGroup::new(s.link, s.role, s.len()))
                .collect(),
        }
    }

    pub fn groups(&self) -> &[MemoryGroup] {
        &self.groups
    }

    pub fn group(&self, link: LinkId, role: Role) -> &MemoryGroup {
        self.groups
            .iter()
            .find(|g| g.link == link && g.role == role)
            .expect("group exists")
    }

    pub fn group_mut(&mut self, link: LinkId, role: Role) -> &mut MemoryGroup {
        self.groups
            .iter_mut()
            .find(|g| g.link == link && g.role == role)
            .expect("group exists")
    }
}

/// Absorption counters of one link endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SideCounters {
    pub stored: u64,
    pub overwritten: u64,
    pub dropped: u64,
}

impl SideCounters {
    pub fn record(&mut self, outcome: AbsorbOutcome) {
        match outcome {
            AbsorbOutcome::Stored(_) => self.stored += 1,
            AbsorbOutcome::Overwrote { .. } => self.overwritten += 1,
            AbsorbOutcome::Dropped => self.dropped += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.stored + self.overwritten + self.dropped
    }
}

/// Per-link generation and absorption counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkCounters {
    pub generated: u64,
    pub master: SideCounters,
    pub slave: SideCounters,
}

impl LinkCounters {
    pub fn side(&self, role: Role) -> &SideCounters {
        match role {
            Role::Master => &self.master,
            Role::Slave => &self.slave,
        }
    }

    /// `generated == stored + overwritten + dropped` on both endpoints.
    pub fn is_conserved(&self) -> bool {
        self.master.total() == self.generated && self.slave.total() == self.generated
    }
}

/// Time to the next heralded pair of a Poisson source.
pub fn next_generation(epsg_rate: f64, rng: &mut SimRng) -> f64 {
    assert!(epsg_rate > 0.0, "source rate must be positive");
    rng.exponential(epsg_rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BsmResult {
    /// Two classical outcome bits and the fidelity of the swapped pair.
    Success {
        bits: u8,
        fidelity: Fidelity,
    },
    Failure,
}

/// Bell-state measurement over two halves whose fidelities were already
/// dephased to the completion instant.
pub fn attempt_bsm(left: Fidelity, right: Fidelity, success_prob: f64, rng: &mut SimRng) -> BsmResult {
    if rng.bernoulli(success_prob) {
        BsmResult::Success {
            bits: rng.two_bits(),
            fidelity: swap_fidelity(left, right),
        }
    } else {
        BsmResult::Failure
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn half(seq: u64, birth: f64) -> StoredHalf {
        StoredHalf {
            pair_seq: seq,
            birth: SimTime::from_secs(birth),
            f_init: Fidelity::new(0.95),
        }
    }

    fn used(seq: u64) -> Cell {
        let mut g = MemoryGroup::from_cells(LinkId(0), Role::Master, vec![Cell::valid(half(seq, 0.0))]);
        assert_eq!(g.lock(0, seq, 99), LockOutcome::Locked);
        g.cells[0]
    }

    fn group(cells: Vec<Cell>) -> MemoryGroup {
        MemoryGroup::from_cells(LinkId(0), Role::Slave, cells)
    }

    #[test]
    fn absorb_prefers_empty() {
        let mut g = group(vec![Cell::valid(half(1, 1.0)), Cell::EMPTY, used(2), Cell::EMPTY]);
        assert_eq!(g.absorb(half(3, 2.0)), AbsorbOutcome::Stored(1));
    }

    #[test]
    fn absorb_overwrites_oldest_valid() {
        let mut g = group(vec![Cell::valid(half(1, 1.0)), Cell::valid(half(3, 3.0)), used(2)]);
        assert_eq!(
            g.absorb(half(4, 4.0)),
            AbsorbOutcome::Overwrote {
                cell: 0,
                old_pair_seq: 1
            }
        );
        assert_eq!(g.cell(0).half().unwrap().pair_seq, 4);
    }

    #[test]
    fn absorb_drops_when_all_used() {
        let mut g = group(vec![used(1), used(2), used(3)]);
        assert_eq!(g.absorb(half(4, 4.0)), AbsorbOutcome::Dropped);
        assert_eq!(g.count(CellState::Used), 3);
    }

    #[test]
    fn lock_outcomes() {
        let mut g = group(vec![
            Cell::valid(half(17, 0.0)),
            Cell::valid(half(18, 0.0)),
            Cell::EMPTY,
        ]);
        assert_eq!(g.lock(0, 17, 1), LockOutcome::Locked);
        assert_eq!(g.cell(0).state(), CellState::Used);
        assert_eq!(g.cell(0).owner(), Some(1));
        assert_eq!(g.lock(1, 17, 1), LockOutcome::StaleMismatch { held: 18 });
        assert_eq!(g.lock(2, 5, 1), LockOutcome::NotValid);
        assert_eq!(g.lock(0, 17, 2), LockOutcome::NotValid);
    }

    #[test]
    fn find_valid_prefers_hint() {
        let g = group(vec![
            Cell::valid(half(4, 0.0)),
            used(5),
            Cell::valid(half(5, 1.0)),
            Cell::valid(half(4, 2.0)),
        ]);
        assert_eq!(g.find_valid(3, 4), Some(3));
        assert_eq!(g.find_valid(1, 5), Some(2));
        assert_eq!(g.find_valid(0, 9), None);
        assert_eq!(g.find_valid(17, 4), Some(0));
    }

    #[test]
    fn free_from_used_and_valid() {
        let mut g = group(vec![used(1), Cell::valid(half(2, 0.0))]);
        assert_eq!(g.free(0).pair_seq, 1);
        assert_eq!(g.free(1).pair_seq, 2);
        assert_eq!(g.count(CellState::Empty), 2);
        assert!(g.cells().iter().all(|c| c.half().is_none() && c.owner().is_none()));
    }

    #[test]
    #[should_panic(expected = "double free")]
    fn double_free_aborts() {
        let mut g = group(vec![used(1)]);
        g.free(0);
        g.free(0);
    }

    #[test]
    fn youngest_valid_ignores_used() {
        let g = group(vec![
            Cell::valid(half(1, 1.0)),
            used(9),
            Cell::valid(half(3, 3.0)),
            Cell::EMPTY,
        ]);
        assert_eq!(g.youngest_valid(), Some(2));
        assert_eq!(group(vec![used(1), Cell::EMPTY]).youngest_valid(), None);
    }

    #[test]
    fn bsm_examples() {
        let mut rng = SimRng::seed_from_u64(1);
        match attempt_bsm(Fidelity::PERFECT, Fidelity::PERFECT, 1.0, &mut rng) {
            BsmResult::Success { bits, fidelity } => {
                assert!(bits < 4);
                assert_eq!(fidelity, Fidelity::PERFECT);
            }
            BsmResult::Failure => panic!("p = 1 cannot fail"),
        }
        let n = 100_000;
        let f = Fidelity::new(0.9);
        let ok = (0..n)
            .filter(|_| matches!(attempt_bsm(f, f, 0.95, &mut rng), BsmResult::Success { .. }))
            .count();
        let rate = ok as f64 / n as f64;
        assert!((rate - 0.95).abs() < 0.005, "{rate}");
    }

    #[test]
    fn generation_is_poisson_at_the_source_rate() {
        let mut rng = SimRng::seed_from_u64(5);
        let n = 100_000;
        let mean = (0..n).map(|_| next_generation(100.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.01).abs() < 1e-4, "{mean}");
        // pairs in a 60 s window
        let mut t = 0.0;
        let mut count = 0u32;
        loop {
            t += next_generation(100.0, &mut rng);
            if t > 60.0 {
                break;
            }
            count += 1;
        }
        // 6000 expected, sd ~ 77
        assert!((5700..6300).contains(&count), "{count}");
    }

    #[test]
    fn counters_conservation() {
        let mut c = LinkCounters {
            generated: 3,
            ..LinkCounters::default()
        };
        c.master.record(AbsorbOutcome::Stored(0));
        c.master.record(AbsorbOutcome::Dropped);
        c.master.record(AbsorbOutcome::Overwrote {
            cell: 0,
            old_pair_seq: 0,
        });
        c.slave.stored = 3;
        assert!(c.is_conserved());
        c.generated = 4;
        assert!(!c.is_conserved());
    }

    proptest! {
        // Two mirrored groups fed the same arrivals without locks never diverge.
        #[test]
        fn mirrors_stay_consistent_without_locks(
            size in 1usize..12,
            gaps in prop::collection::vec(0.0f64..0.1, 1..200),
        ) {
            let mut master = MemoryGroup::new(LinkId(0), Role::Master, size);
            let mut slave = MemoryGroup::new(LinkId(0), Role::Slave, size);
            let mut t = 0.0;
            for (seq, gap) in gaps.iter().enumerate() {
                t += gap;
                let h = half(seq as u64, t);
                let a = master.absorb(h);
                let b = slave.absorb(h);
                prop_assert_eq!(a, b);
            }
            for (m, s) in master.cells().iter().zip(slave.cells()) {
                prop_assert_eq!(m.half().map(|h| h.pair_seq), s.half().map(|h| h.pair_seq));
            }
        }
    }
}
