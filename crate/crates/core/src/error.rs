use alloc::string::String;

use crate::network::NodeId;

/// Invalid scenario or topology description.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("parameter `{name}` out of range: {reason}")]
    OutOfRange { name: &'static str, reason: String },
    #[error("node {node} cannot host its memory groups: {cells} cells for {groups} groups")]
    InfeasibleSplit { node: NodeId, cells: usize, groups: usize },
    #[error("no path from {src} to {dst}")]
    NoPath { src: NodeId, dst: NodeId },
}
