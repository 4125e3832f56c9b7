//! Static topology: linear repeater chains, link geometry, classical latency
//! and the per-link, per-role partition of node memories.
//!
//! Links are oriented from the source end node towards the destination. The
//! upstream endpoint of a link owns the Master group for that link and the
//! downstream endpoint the mirror Slave group; Master cell `i` of a link
//! mirrors Slave cell `i` on the other side.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::error::ConfigError;
use crate::params::PhysicalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Master,
    Slave,
}

impl Role {
    pub fn mirror(self) -> Role {
        match self {
            Role::Master => Role::Slave,
            Role::Slave => Role::Master,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Role::Master => 'M',
            Role::Slave => 'S',
        }
    }
}

/// A quantum link with its entangled photon source halfway between the
/// endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    /// `(upstream, downstream)`: the first endpoint holds the Master group.
    pub endpoints: (NodeId, NodeId),
    pub length_m: f64,
    pub epsg_rate: f64,
}

impl Link {
    pub fn role_of(&self, node: NodeId) -> Option<Role> {
        if node == self.endpoints.0 {
            Some(Role::Master)
        } else if node == self.endpoints.1 {
            Some(Role::Slave)
        } else {
            None
        }
    }
}

/// A memory cell addressed by node and node-level index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellRef {
    pub node: NodeId,
    pub cell: usize,
}

/// Contiguous run of a node's cells serving one link in one role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    pub link: LinkId,
    pub role: Role,
    pub cells: Range<usize>,
}

impl GroupSpec {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Assignment of one cell to a `(link, role)` group, with its mirror.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellAssignment {
    pub node: NodeId,
    pub cell_index: usize,
    pub link: LinkId,
    pub role: Role,
    pub mirror: CellRef,
}

/// A link incident to a node, with the role the node plays on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IncidentLink {
    pub link: LinkId,
    pub role: Role,
}

/// Which group receives the remainder when cells do not divide evenly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Remainder {
    /// Earlier groups in `incident_links` order (upstream first on a chain).
    First,
    /// Later groups.
    Last,
}

/// Split `cells` evenly across the incident `(link, role)` groups, assigning
/// cell indices in `incident_links` order. Group sizes differ by at most one;
/// the remainder goes to the upstream groups.
pub fn partition_memory(
    node: NodeId,
    incident_links: &[IncidentLink],
    cells: usize,
) -> Result<Vec<GroupSpec>, ConfigError> {
    partition_memory_with(node, incident_links, cells, Remainder::First)
}

pub fn partition_memory_with(
    node: NodeId,
    incident_links: &[IncidentLink],
    cells: usize,
    remainder: Remainder,
) -> Result<Vec<GroupSpec>, ConfigError> {
    let groups = incident_links.len();
    if groups == 0 || cells < groups {
        return Err(ConfigError::InfeasibleSplit { node, cells, groups });
    }
    let base = cells / groups;
    let extra = cells % groups;
    let mut next = 0;
    let specs = incident_links
        .iter()
        .enumerate()
        .map(|(i, inc)| {
            let gets_extra = match remainder {
                Remainder::First => i < extra,
                Remainder::Last => i >= groups - extra,
            };
            let size = base + usize::from(gets_extra);
            let spec = GroupSpec {
                link: inc.link,
                role: inc.role,
                cells: next..next + size,
            };
            next += size;
            spec
        })
        .collect();
    Ok(specs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeInfo {
    pub id: NodeId,
    pub name: String,
    pub cells: usize,
    pub groups: Vec<GroupSpec>,
}

impl NodeInfo {
    pub fn group(&self, link: LinkId, role: Role) -> Option<&GroupSpec> {
        self.groups.iter().find(|g| g.link == link && g.role == role)
    }
}

/// Linear chain `A - R1 - ... - Rn - B`, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    nodes: Vec<NodeInfo>,
    links: Vec<Link>,
    signal_speed: f64,
}

/// Build a chain of `n_repeaters` repeaters between two end nodes, with one
/// source per link and `cells_per_node` memory cells at every repeater.
///
/// Repeaters split their memory between the upstream Slave group and the
/// downstream Master group. End nodes get exactly as many cells as the mirror
/// group of their only link, so every cell has a mirror. With an odd cell
/// count the remainder alternates between upstream (R1, R3, ...) and
/// downstream (R2, R4, ...) so that both sides of every link agree in size.
pub fn build_chain(
    n_repeaters: usize,
    link_length_m: f64,
    cells_per_node: usize,
    params: &PhysicalParams,
) -> Result<Chain, ConfigError> {
    if !(link_length_m.is_finite() && link_length_m >= 0.0) {
        return Err(ConfigError::OutOfRange {
            name: "link_length_m",
            reason: format!("{link_length_m} must be finite and non-negative"),
        });
    }
    let n_nodes = n_repeaters + 2;
    let links: Vec<Link> = (0..=n_repeaters)
        .map(|j| Link {
            id: LinkId(j as u32),
            endpoints: (NodeId(j as u32), NodeId(j as u32 + 1)),
            length_m: link_length_m,
            epsg_rate: params.epsg_rate,
        })
        .collect();

    let mut repeater_groups = Vec::with_capacity(n_repeaters);
    for r in 1..=n_repeaters {
        let node = NodeId(r as u32);
        let incident = [
            IncidentLink {
                link: LinkId(r as u32 - 1),
                role: Role::Slave,
            },
            IncidentLink {
                link: LinkId(r as u32),
                role: Role::Master,
            },
        ];
        let remainder = if r % 2 == 1 { Remainder::First } else { Remainder::Last };
        repeater_groups.push(partition_memory_with(node, &incident, cells_per_node, remainder)?);
    }

    let (src_cells, dst_cells) = if n_repeaters == 0 {
        (cells_per_node, cells_per_node)
    } else {
        (repeater_groups[0][0].len(), repeater_groups[n_repeaters - 1][1].len())
    };
    let src_groups = partition_memory(
        NodeId(0),
        &[IncidentLink {
            link: LinkId(0),
            role: Role::Master,
        }],
        src_cells,
    )?;
    let last = NodeId(n_nodes as u32 - 1);
    let dst_groups = partition_memory(
        last,
        &[IncidentLink {
            link: LinkId(n_repeaters as u32),
            role: Role::Slave,
        }],
        dst_cells,
    )?;

    let mut nodes = Vec::with_capacity(n_nodes);
    nodes.push(NodeInfo {
        id: NodeId(0),
        name: String::from("A"),
        cells: src_cells,
        groups: src_groups,
    });
    for (i, groups) in repeater_groups.into_iter().enumerate() {
        nodes.push(NodeInfo {
            id: NodeId(i as u32 + 1),
            name: format!("R{}", i + 1),
            cells: cells_per_node,
            groups,
        });
    }
    nodes.push(NodeInfo {
        id: last,
        name: String::from("B"),
        cells: dst_cells,
        groups: dst_groups,
    });

    let chain = Chain {
        nodes,
        links,
        signal_speed: params.signal_speed,
    };
    debug_assert!(chain.links.iter().all(|l| {
        chain.group(l.endpoints.0, l.id, Role::Master).len() == chain.group(l.endpoints.1, l.id, Role::Slave).len()
    }));
    Ok(chain)
}

impl Chain {
    pub fn nodes(&self) -> &[NodeInfo] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &NodeInfo {
        &self.nodes[id.index()]
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn source(&self) -> NodeId {
        NodeId(0)
    }

    pub fn destination(&self) -> NodeId {
        NodeId(self.nodes.len() as u32 - 1)
    }

    pub fn n_repeaters(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn signal_speed(&self) -> f64 {
        self.signal_speed
    }

    /// Group of `node` serving `link` in `role`; panics if there is none.
    pub fn group(&self, node: NodeId, link: LinkId, role: Role) -> &GroupSpec {
        self.node(node)
            .group(link, role)
            .unwrap_or_else(|| panic!("node {node} has no {role:?} group on {link}"))
    }

    /// Link from `node` towards the destination, if any.
    pub fn downstream_link(&self, node: NodeId) -> Option<LinkId> {
        (node != self.destination()).then_some(LinkId(node.0))
    }

    /// Link from `node` towards the source, if any.
    pub fn upstream_link(&self, node: NodeId) -> Option<LinkId> {
        (node != self.source()).then(|| LinkId(node.0 - 1))
    }

    /// Smallest `(link, role)` group size along the chain.
    pub fn min_group_size(&self) -> usize {
        self.nodes
            .iter()
            .flat_map(|n| n.groups.iter().map(GroupSpec::len))
            .min()
            .unwrap_or(0)
    }

    /// Every cell of `node` with its group and mirror cell.
    pub fn cell_assignments(&self, node: NodeId) -> Vec<CellAssignment> {
        let info = self.node(node);
        let mut out = Vec::with_capacity(info.cells);
        for g in &info.groups {
            let link = self.link(g.link);
            let peer = if g.role == Role::Master {
                link.endpoints.1
            } else {
                link.endpoints.0
            };
            let mirror_group = self.group(peer, g.link, g.role.mirror());
            for (local, cell) in g.cells.clone().enumerate() {
                out.push(CellAssignment {
                    node,
                    cell_index: cell,
                    link: g.link,
                    role: g.role,
                    mirror: CellRef {
                        node: peer,
                        cell: mirror_group.cells.start + local,
                    },
                });
            }
        }
        out
    }

    /// Mirror of a cell on the other endpoint of its link.
    pub fn mirror(&self, cell: CellRef) -> CellRef {
        self.cell_assignments(cell.node)
            .into_iter()
            .find(|a| a.cell_index == cell.cell)
            .map(|a| a.mirror)
            .unwrap_or_else(|| panic!("no cell {} at {}", cell.cell, cell.node))
    }

    /// Hop-count-minimal path from `src` to `dst` (breadth-first search).
    pub fn shortest_path(&self, src: NodeId, dst: NodeId) -> Result<Vec<NodeId>, ConfigError> {
        let n = self.nodes.len();
        if src == dst || src.index() >= n || dst.index() >= n {
            return Err(ConfigError::NoPath { src, dst });
        }
        let mut adjacency = vec![Vec::new(); n];
        for l in &self.links {
            let (a, b) = l.endpoints;
            adjacency[a.index()].push(b);
            adjacency[b.index()].push(a);
        }
        let mut parent: Vec<Option<NodeId>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([src]);
        seen[src.index()] = true;
        while let Some(u) = queue.pop_front() {
            if u == dst {
                let mut path = vec![dst];
                let mut cur = dst;
                while let Some(p) = parent[cur.index()] {
                    path.push(p);
                    cur = p;
                }
                path.reverse();
                return Ok(path);
            }
            for &v in &adjacency[u.index()] {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    parent[v.index()] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        Err(ConfigError::NoPath { src, dst })
    }

    /// One-way classical latency over a link, seconds.
    pub fn classical_latency(&self, link: LinkId) -> f64 {
        classical_latency(self.link(link), self.signal_speed)
    }

    /// Delay between generation at the mid-link source and arrival of the
    /// heralded photons at both endpoints.
    pub fn pair_arrival_latency(&self, link: LinkId) -> f64 {
        self.classical_latency(link) / 2.0
    }

    /// Classical latency from `from` to `to` along the chain, summing the
    /// per-hop latencies in travel order.
    pub fn path_latency(&self, from: NodeId, to: NodeId) -> f64 {
        let mut total = 0.0;
        if from < to {
            for j in from.0..to.0 {
                total += self.classical_latency(LinkId(j));
            }
        } else {
            for j in (to.0..from.0).rev() {
                total += self.classical_latency(LinkId(j));
            }
        }
        total
    }
}

/// `length / signal_speed`.
pub fn classical_latency(link: &Link, signal_speed: f64) -> f64 {
    link.length_m / signal_speed
}
