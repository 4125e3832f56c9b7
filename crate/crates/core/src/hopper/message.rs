//! Classical signalling exchanged by the establishment protocol.

use alloc::vec::Vec;
use core::fmt;

use crate::fidelity::Fidelity;
use crate::network::{NodeId, PortId};
use crate::time::SimTime;

/// Names one establishment attempt. `attempt_id` is a per-source-port
/// counter, so retries of the same request get fresh tuples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FiveTuple {
    pub src_node: NodeId,
    pub src_port: PortId,
    pub dst_node: NodeId,
    pub dst_port: PortId,
    pub attempt_id: u64,
}

impl fmt::Display for FiveTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}->{}:{}#{}",
            self.src_node, self.src_port, self.dst_node, self.dst_port, self.attempt_id
        )
    }
}

/// Group-local cell index and the pair it is expected to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellClaim {
    pub cell_index: usize,
    pub pair_seq: u64,
}

/// Establishment request travelling hop by hop towards the destination.
#[derive(Debug, Clone, PartialEq)]
pub struct EsReq {
    pub tuple: FiveTuple,
    /// Nodes still to visit, starting with the receiver.
    pub path: Vec<NodeId>,
    /// Slave cell at the receiver mirroring the sender's locked Master cell.
    pub upstream_cell: CellClaim,
    /// Two-bit outcomes of the swaps performed so far, in path order.
    pub corrections: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsRemComp {
    pub tuple: FiveTuple,
    pub completion_time: SimTime,
    pub fidelity: Fidelity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FailCause {
    /// The designated Slave cell no longer held the expected pair.
    StaleCell,
    /// Bell-state measurement failed.
    Bsm,
    /// Cut short by the end of the run.
    Abandoned,
}

impl FailCause {
    pub fn as_str(self) -> &'static str {
        match self {
            FailCause::StaleCell => "stale-cell",
            FailCause::Bsm => "bsm",
            FailCause::Abandoned => "abandoned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EsRemFail {
    pub tuple: FiveTuple,
    pub failing_node: NodeId,
    pub cause: FailCause,
}

/// Asks a successor to release the Slave half mirroring a Master cell that
/// was locked but never announced. Carries the pair sequence so that a cell
/// already reused for another pair is left alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EsFree {
    pub tuple: FiveTuple,
    pub cell: CellClaim,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    EsReq(EsReq),
    EsRemComp(EsRemComp),
    EsRemFail(EsRemFail),
    EsFree(EsFree),
}

impl Message {
    pub fn tuple(&self) -> FiveTuple {
        match self {
            Message::EsReq(m) => m.tuple,
            Message::EsRemComp(m) => m.tuple,
            Message::EsRemFail(m) => m.tuple,
            Message::EsFree(m) => m.tuple,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Message::EsReq(_) => "EsReq",
            Message::EsRemComp(_) => "EsRemComp",
            Message::EsRemFail(_) => "EsRemFail",
            Message::EsFree(_) => "EsFree",
        }
    }

    /// Type-specific part of the message dump line.
    pub fn write_detail(&self, out: &mut dyn fmt::Write) -> fmt::Result {
        match self {
            Message::EsReq(m) => {
                write!(
                    out,
                    "cell={} seq={} bits=",
                    m.upstream_cell.cell_index, m.upstream_cell.pair_seq
                )?;
                if m.corrections.is_empty() {
                    out.write_str("-")?;
                }
                for b in &m.corrections {
                    write!(out, "{b:02b}")?;
                }
                Ok(())
            }
            Message::EsRemComp(m) => write!(out, "t={} f={}", m.completion_time, m.fidelity),
            Message::EsRemFail(m) => write!(out, "at={} cause={}", m.failing_node, m.cause.as_str()),
            Message::EsFree(m) => write!(out, "cell={} seq={}", m.cell.cell_index, m.cell.pair_seq),
        }
    }
}
