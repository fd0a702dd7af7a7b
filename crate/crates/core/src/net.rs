//! Grid network topology.
//!
//! Nodes are laid out row-major with row 0 on the north edge. Every link is
//! directed and carries the compass heading of travel. Links are stored in
//! three contiguous blocks:
//!
//! 1. internal links (both ends signalized), ordered row-major by the
//!    upstream node and then by heading `N, E, S, W`. This block fixes the
//!    layout of the queue vector handed to agents.
//! 2. boundary entry links (source -> node), ordered row-major by the
//!    downstream node, then heading.
//! 3. boundary exit links (node -> sink), ordered row-major by the upstream
//!    node, then heading.
//!
//! Every intersection therefore has exactly four incoming and four outgoing
//! links; on the edge of the grid some of them are boundary links.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

/// Compass heading of travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Heading after a left turn.
    pub fn left(self) -> Direction {
        Direction::ALL[(self.index() + 3) % 4]
    }

    /// Heading after a right turn.
    pub fn right(self) -> Direction {
        Direction::ALL[(self.index() + 1) % 4]
    }

    pub fn axis(self) -> Axis {
        match self {
            Direction::N | Direction::S => Axis::NorthSouth,
            Direction::E | Direction::W => Axis::EastWest,
        }
    }

    fn step(self) -> (isize, isize) {
        match self {
            Direction::N => (-1, 0),
            Direction::E => (0, 1),
            Direction::S => (1, 0),
            Direction::W => (0, -1),
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(Direction::N),
            "E" | "e" => Ok(Direction::E),
            "S" | "s" => Ok(Direction::S),
            "W" | "w" => Ok(Direction::W),
            other => Err(Error::Config(format!("unknown heading `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    NorthSouth,
    EastWest,
}

/// Turning movement at the downstream end of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Movement {
    Straight,
    Left,
    Right,
}

impl Movement {
    pub const ALL: [Movement; 3] = [Movement::Straight, Movement::Left, Movement::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn outgoing_heading(self, heading: Direction) -> Direction {
        match self {
            Movement::Straight => heading,
            Movement::Left => heading.left(),
            Movement::Right => heading.right(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    Node(NodeId),
    Boundary,
}

impl Endpoint {
    pub fn node(self) -> Option<NodeId> {
        match self {
            Endpoint::Node(n) => Some(n),
            Endpoint::Boundary => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    Internal,
    Entry,
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaneLayout {
    pub straight: u32,
    pub left: u32,
    pub right: u32,
}

impl Default for LaneLayout {
    fn default() -> Self {
        Self {
            straight: 2,
            left: 1,
            right: 1,
        }
    }
}

impl LaneLayout {
    pub fn lanes(&self, movement: Movement) -> u32 {
        match movement {
            Movement::Straight => self.straight,
            Movement::Left => self.left,
            Movement::Right => self.right,
        }
    }

    pub fn total(&self) -> u32 {
        self.straight + self.left + self.right
    }
}

/// Geometry shared by every link of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    /// metres
    pub link_length: f64,
    /// metres / second
    pub free_flow_speed: f64,
    pub lanes_mid: u32,
    pub lanes_approach: u32,
    pub approach_layout: LaneLayout,
    /// metres / vehicle
    pub jam_spacing: f64,
}

impl Default for GridGeometry {
    fn default() -> Self {
        Self {
            link_length: 300.0,
            free_flow_speed: 13.89,
            lanes_mid: 3,
            lanes_approach: 4,
            approach_layout: LaneLayout::default(),
            jam_spacing: 7.5,
        }
    }
}

impl GridGeometry {
    pub fn free_flow_time(&self, length: f64) -> u32 {
        (length / self.free_flow_speed).ceil() as u32
    }

    pub fn jam_capacity(&self, length: f64) -> u32 {
        (length * f64::from(self.lanes_mid) / self.jam_spacing).floor() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub from: Endpoint,
    pub to: Endpoint,
    /// heading of travel
    pub direction: Direction,
    pub length: f64,
    pub free_flow_time: u32,
    pub jam_capacity: u32,
    pub is_internal: bool,
    pub kind: LinkKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub id: NodeId,
    pub position: (usize, usize),
    /// Incoming link per travel heading, indexed by `Direction::index`.
    pub incoming: [LinkId; 4],
    /// Outgoing link per travel heading, indexed by `Direction::index`.
    pub outgoing: [LinkId; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub rows: usize,
    pub cols: usize,
    pub geometry: GridGeometry,
    pub intersections: Vec<Intersection>,
    pub links: Vec<Link>,
    internal_count: usize,
}

/// A broken network invariant, with the element that breaks it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub element: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.element)
    }
}

/// Number of internal directed links in a `rows x cols` grid.
pub fn internal_link_count(rows: usize, cols: usize) -> usize {
    2 * (rows * cols.saturating_sub(1) + cols * rows.saturating_sub(1))
}

/// Build a validated `rows x cols` grid.
pub fn build_grid(rows: usize, cols: usize, geometry: GridGeometry) -> Result<NetworkSpec> {
    if rows == 0 || cols == 0 {
        return Err(Error::Network(format!(
            "grid must be at least 1x1, got {rows}x{cols}"
        )));
    }
    if !(geometry.link_length > 0.0 && geometry.link_length.is_finite()) {
        return Err(Error::Network(format!(
            "link_length must be positive, got {}",
            geometry.link_length
        )));
    }
    if !(geometry.free_flow_speed > 0.0 && geometry.free_flow_speed.is_finite()) {
        return Err(Error::Network(format!(
            "free_flow_speed must be positive, got {}",
            geometry.free_flow_speed
        )));
    }
    if geometry.jam_spacing.is_nan() || geometry.jam_spacing <= 0.0 || geometry.lanes_mid == 0 {
        return Err(Error::Network(
            "jam_spacing and lanes_mid must be positive".into(),
        ));
    }
    if geometry.approach_layout.straight == 0 {
        return Err(Error::Network(
            "approach layout needs at least one straight lane".into(),
        ));
    }
    if geometry.approach_layout.total() != geometry.lanes_approach {
        return Err(Error::Network(format!(
            "approach layout has {} lanes but lanes_approach is {}",
            geometry.approach_layout.total(),
            geometry.lanes_approach
        )));
    }

    let node_at = |r: usize, c: usize| NodeId(r * cols + c);
    let neighbour = |r: usize, c: usize, d: Direction| -> Option<NodeId> {
        let (dr, dc) = d.step();
        let nr = r as isize + dr;
        let nc = c as isize + dc;
        (nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols)
            .then(|| node_at(nr as usize, nc as usize))
    };

    let length = geometry.link_length;
    let fft = geometry.free_flow_time(length);
    let jam = geometry.jam_capacity(length);
    if jam == 0 {
        return Err(Error::Network("jam capacity rounds to zero vehicles".into()));
    }

    let mut links = Vec::new();
    let push = |links: &mut Vec<Link>, from: Endpoint, to: Endpoint, direction: Direction, kind: LinkKind| {
        let id = LinkId(links.len());
        links.push(Link {
            id,
            from,
            to,
            direction,
            length,
            free_flow_time: fft,
            jam_capacity: jam,
            is_internal: kind == LinkKind::Internal,
            kind,
        });
        id
    };

    let n_nodes = rows * cols;
    let mut incoming = vec![[None::<LinkId>; 4]; n_nodes];
    let mut outgoing = vec![[None::<LinkId>; 4]; n_nodes];

    for r in 0..rows {
        for c in 0..cols {
            let from = node_at(r, c);
            for d in Direction::ALL {
                if let Some(to) = neighbour(r, c, d) {
                    let id = push(
                        &mut links,
                        Endpoint::Node(from),
                        Endpoint::Node(to),
                        d,
                        LinkKind::Internal,
                    );
                    outgoing[from.0][d.index()] = Some(id);
                    incoming[to.0][d.index()] = Some(id);
                }
            }
        }
    }
    let internal_count = links.len();

    for r in 0..rows {
        for c in 0..cols {
            let to = node_at(r, c);
            for d in Direction::ALL {
                // a vehicle heading `d` into this node comes from the opposite side
                let (dr, dc) = d.step();
                let (pr, pc) = (r as isize - dr, c as isize - dc);
                let upstream_inside = pr >= 0 && pc >= 0 && (pr as usize) < rows && (pc as usize) < cols;
                if !upstream_inside {
                    let id = push(
                        &mut links,
                        Endpoint::Boundary,
                        Endpoint::Node(to),
                        d,
                        LinkKind::Entry,
                    );
                    incoming[to.0][d.index()] = Some(id);
                }
            }
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            let from = node_at(r, c);
            for d in Direction::ALL {
                if neighbour(r, c, d).is_none() {
                    let id = push(
                        &mut links,
                        Endpoint::Node(from),
                        Endpoint::Boundary,
                        d,
                        LinkKind::Exit,
                    );
                    outgoing[from.0][d.index()] = Some(id);
                }
            }
        }
    }

    let intersections = (0..n_nodes)
        .map(|i| Intersection {
            id: NodeId(i),
            position: (i / cols, i % cols),
            incoming: incoming[i].map(|l| l.expect("every approach is wired")),
            outgoing: outgoing[i].map(|l| l.expect("every exit is wired")),
        })
        .collect();

    let net = NetworkSpec {
        rows,
        cols,
        geometry,
        intersections,
        links,
        internal_count,
    };
    let violations = net.validate();
    if let Some(v) = violations.first() {
        return Err(Error::Network(v.to_string()));
    }
    Ok(net)
}

impl NetworkSpec {
    pub fn node_count(&self) -> usize {
        self.intersections.len()
    }

    pub fn node_at(&self, row: usize, col: usize) -> Option<NodeId> {
        (row < self.rows && col < self.cols).then(|| NodeId(row * self.cols + col))
    }

    pub fn link(&self, id: LinkId) -> Result<&Link> {
        self.links.get(id.0).ok_or(Error::UnknownLink(id))
    }

    pub fn intersection(&self, id: NodeId) -> &Intersection {
        &self.intersections[id.0]
    }

    /// Internal links in state-vector order.
    pub fn internal_links(&self) -> Vec<LinkId> {
        (0..self.internal_count).map(LinkId).collect()
    }

    pub fn internal_count(&self) -> usize {
        self.internal_count
    }

    /// Boundary entry links in storage order.
    pub fn entry_links(&self) -> impl Iterator<Item = &Link> {
        self.links.iter().filter(|l| l.kind == LinkKind::Entry)
    }

    /// The entry link feeding `node` with travel heading `heading`, if that
    /// approach is on the boundary.
    pub fn entry_link(&self, node: NodeId, heading: Direction) -> Option<LinkId> {
        let id = self.intersections.get(node.0)?.incoming[heading.index()];
        (self.links[id.0].kind == LinkKind::Entry).then_some(id)
    }

    /// Check every structural invariant. An empty list means the network is
    /// well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut flag = |invariant: &'static str, element: String| out.push(Violation { invariant, element });

        if self.intersections.len() != self.rows * self.cols {
            flag(
                "intersection count",
                format!(
                    "{} intersections for a {}x{} grid",
                    self.intersections.len(),
                    self.rows,
                    self.cols
                ),
            );
        }
        let internal = self.links.iter().filter(|l| l.is_internal).count();
        let expected = internal_link_count(self.rows, self.cols);
        if internal != expected {
            flag(
                "internal link count",
                format!("{internal} internal links, expected {expected}"),
            );
        }
        if self.links[..self.internal_count.min(self.links.len())]
            .iter()
            .any(|l| !l.is_internal)
        {
            flag("link ordering", "internal links must come first".into());
        }

        let n_nodes = self.intersections.len();
        let node_ok = |e: Endpoint| match e {
            Endpoint::Node(n) => n.0 < n_nodes,
            Endpoint::Boundary => true,
        };

        for (i, link) in self.links.iter().enumerate() {
            if link.id.0 != i {
                flag("link id", format!("link at index {i} carries id {}", link.id));
            }
            if !link.length.is_finite() || link.length <= 0.0 {
                flag(
                    "free_flow_time/jam_capacity undefined",
                    format!("{} has length {}", link.id, link.length),
                );
                continue;
            }
            let fft = self.geometry.free_flow_time(link.length);
            if link.free_flow_time != fft {
                flag(
                    "free_flow_time",
                    format!("{} has {} s, expected {fft} s", link.id, link.free_flow_time),
                );
            }
            let jam = self.geometry.jam_capacity(link.length);
            if jam == 0 || link.jam_capacity != jam {
                flag(
                    "jam_capacity",
                    format!("{} has {}, expected {jam} > 0", link.id, link.jam_capacity),
                );
            }
            let both = matches!((link.from, link.to), (Endpoint::Node(_), Endpoint::Node(_)));
            if link.is_internal != both {
                flag(
                    "is_internal iff both endpoints signalized",
                    format!("{}", link.id),
                );
            }
            if !node_ok(link.from) || !node_ok(link.to) {
                flag("link endpoint", format!("{} references a missing node", link.id));
            }
        }

        let mut seen_in = vec![0usize; self.links.len()];
        let mut seen_out = vec![0usize; self.links.len()];
        for node in &self.intersections {
            for d in Direction::ALL {
                let l = node.incoming[d.index()];
                match self.links.get(l.0) {
                    None => flag("approach slot", format!("{} {d:?} -> missing {l}", node.id)),
                    Some(link) => {
                        seen_in[l.0] += 1;
                        if link.to != Endpoint::Node(node.id) || link.direction != d {
                            flag(
                                "approach slot",
                                format!("{} {d:?} bound to {l} which does not arrive here", node.id),
                            );
                        }
                    }
                }
                let l = node.outgoing[d.index()];
                match self.links.get(l.0) {
                    None => flag("exit slot", format!("{} {d:?} -> missing {l}", node.id)),
                    Some(link) => {
                        seen_out[l.0] += 1;
                        if link.from != Endpoint::Node(node.id) || link.direction != d {
                            flag(
                                "exit slot",
                                format!("{} {d:?} bound to {l} which does not leave here", node.id),
                            );
                        }
                    }
                }
            }
            let (r, c) = node.position;
            let interior = r > 0 && c > 0 && r + 1 < self.rows && c + 1 < self.cols;
            if interior {
                let internal_in = node
                    .incoming
                    .iter()
                    .filter(|l| self.links.get(l.0).is_some_and(|k| k.is_internal))
                    .count();
                let internal_out = node
                    .outgoing
                    .iter()
                    .filter(|l| self.links.get(l.0).is_some_and(|k| k.is_internal))
                    .count();
                if internal_in != 4 || internal_out != 4 {
                    flag(
                        "interior degree",
                        format!(
                            "{} has {internal_in} in / {internal_out} out internal links",
                            node.id
                        ),
                    );
                }
            }
        }
        for (i, link) in self.links.iter().enumerate() {
            if seen_in[i] > 1 {
                flag(
                    "approach uniqueness",
                    format!("{} bound to {} approach slots", link.id, seen_in[i]),
                );
            }
            if seen_out[i] > 1 {
                flag(
                    "exit uniqueness",
                    format!("{} bound to {} exit slots", link.id, seen_out[i]),
                );
            }
            if link.to != Endpoint::Boundary && seen_in[i] == 0 {
                flag(
                    "approach coverage",
                    format!("{} is not any intersection's approach", link.id),
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_grid_has_80_internal_links() {
        let net = build_grid(5, 5, GridGeometry::default()).unwrap();
        assert_eq!(net.node_count(), 25);
        assert_eq!(net.internal_links().len(), 80);
        assert!(net.validate().is_empty());
    }

    #[test]
    fn single_node_has_no_internal_links() {
        let net = build_grid(1, 1, GridGeometry::default()).unwrap();
        assert_eq!(net.node_count(), 1);
        assert!(net.internal_links().is_empty());
        assert_eq!(net.entry_links().count(), 4);
    }

    #[test]
    fn two_by_two_ordering() {
        let net = build_grid(2, 2, GridGeometry::default()).unwrap();
        let links = net.internal_links();
        assert_eq!(links.len(), 8);
        let first = net.link(links[0]).unwrap();
        assert_eq!(first.from, Endpoint::Node(NodeId(0)));
        assert_eq!(first.to, Endpoint::Node(NodeId(1)));
        assert_eq!(first.direction, Direction::E);
        // second: (0,0) southbound to (1,0)
        let second = net.link(links[1]).unwrap();
        assert_eq!(second.to, Endpoint::Node(NodeId(2)));
        assert_eq!(second.direction, Direction::S);
    }

    #[test]
    fn default_link_geometry() {
        let net = build_grid(2, 2, GridGeometry::default()).unwrap();
        let l = &net.links[0];
        assert_eq!(l.free_flow_time, 22);
        assert_eq!(l.jam_capacity, 120);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(build_grid(0, 3, GridGeometry::default()).is_err());
        let g = GridGeometry {
            link_length: 0.0,
            ..Default::default()
        };
        assert!(build_grid(2, 2, g).is_err());
        let g = GridGeometry {
            free_flow_speed: -1.0,
            ..Default::default()
        };
        assert!(build_grid(2, 2, g).is_err());
    }

    #[test]
    fn zero_length_link_is_flagged() {
        let mut net = build_grid(2, 2, GridGeometry::default()).unwrap();
        net.links[3].length = 0.0;
        let v = net.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].invariant, "free_flow_time/jam_capacity undefined");
        assert!(v[0].element.contains("l3"));
    }

    #[test]
    fn duplicate_approach_is_flagged() {
        let mut net = build_grid(3, 3, GridGeometry::default()).unwrap();
        let centre = net.node_at(1, 1).unwrap();
        let dup = net.intersections[centre.0].incoming[0];
        net.intersections[centre.0].incoming[1] = dup;
        let v = net.validate();
        assert!(v.iter().any(|v| v.invariant == "approach uniqueness"));
    }

    #[test]
    fn turns() {
        assert_eq!(Direction::N.left(), Direction::W);
        assert_eq!(Direction::N.right(), Direction::E);
        assert_eq!(Direction::E.left(), Direction::N);
        assert_eq!(Direction::W.right(), Direction::N);
        assert_eq!(Movement::Left.outgoing_heading(Direction::S), Direction::E);
    }

    #[test]
    fn internal_count_exhaustive() {
        for rows in 1..=8 {
            for cols in 1..=8 {
                let net = build_grid(rows, cols, GridGeometry::default()).unwrap();
                assert_eq!(net.internal_count(), internal_link_count(rows, cols));
                assert_eq!(net.internal_links(), net.internal_links());
                assert!(net.validate().is_empty(), "{rows}x{cols}");
                // every internal link is exactly one approach
                for l in net.internal_links() {
                    let n = net
                        .intersections
                        .iter()
                        .flat_map(|i| i.incoming.iter())
                        .filter(|&&x| x == l)
                        .count();
                    assert_eq!(n, 1);
                }
            }
        }
    }
}
