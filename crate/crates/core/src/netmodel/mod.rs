//! Road-network model: nodes, directed edges, edge-level connections and
//! fixed-time traffic-light programs.
//!
//! A [`RoadNetwork`] is immutable once built; every edit returns a new value.

mod convert;
mod generate;
mod sumo;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::GeoPoint;

pub use convert::{convert_osm, convert_osm_with_origin, HighwayClass};
pub use generate::{generate_grid, generate_spider};
pub use sumo::{emit_net_xml, parse_net_xml};

/// Green time of each approach group in the default program (s).
pub const DEFAULT_GREEN: f64 = 31.0;
/// Yellow time after every green (s).
pub const DEFAULT_YELLOW: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("network is empty after filtering")]
    EmptyNetwork,
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("edge `{0}` has a single lane; remove the edge instead")]
    LastLane(String),
    #[error("lane {lane} does not exist on edge `{edge}`")]
    UnknownLane { edge: String, lane: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("street name must not be empty")]
    EmptyName,
    #[error("malformed network XML: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub is_junction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub from_node: String,
    pub to_node: String,
    pub street_name: String,
    pub length: f64,
    pub lane_count: u32,
    pub speed_limit: f64,
    pub priority: i32,
    /// Centerline polyline including both endpoints.
    pub shape: Vec<[f64; 2]>,
}

impl Edge {
    pub fn free_flow_time(&self) -> f64 {
        self.length / self.speed_limit
    }

    /// Heading (radians) of the last shape segment, i.e. the approach direction.
    pub fn end_heading(&self) -> f64 {
        let n = self.shape.len();
        let [x0, y0] = self.shape[n - 2];
        let [x1, y1] = self.shape[n - 1];
        (y1 - y0).atan2(x1 - x0)
    }

    pub fn start_heading(&self) -> f64 {
        let [x0, y0] = self.shape[0];
        let [x1, y1] = self.shape[1];
        (y1 - y0).atan2(x1 - x0)
    }
}

/// Permitted movement from the end of one edge onto the start of another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub from: String,
    pub to: String,
    /// Controlling traffic light and the index of this movement in its state strings.
    pub tl: Option<String>,
    pub link_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub duration: f64,
    pub state: String,
}

impl Phase {
    pub fn new(duration: f64, state: impl Into<String>) -> Self {
        Phase {
            duration,
            state: state.into(),
        }
    }

    pub fn is_yellow(&self) -> bool {
        self.state.contains('y') && !self.state.contains(['G', 'g'])
    }

    pub fn has_green(&self) -> bool {
        self.state.contains(['G', 'g'])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficLight {
    /// Id of the controlled junction.
    pub id: String,
    pub program_id: String,
    pub offset: f64,
    pub phases: Vec<Phase>,
}

impl TrafficLight {
    pub fn cycle(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    pub fn link_count(&self) -> usize {
        self.phases.first().map_or(0, |p| p.state.len())
    }

    /// Index of the phase active at simulation time `t`. Phase 0 starts at `offset`.
    pub fn phase_index_at(&self, t: f64) -> usize {
        let cycle = self.cycle();
        let mut pos = (t - self.offset).rem_euclid(cycle);
        for (i, p) in self.phases.iter().enumerate() {
            if pos < p.duration {
                return i;
            }
            pos -= p.duration;
        }
        self.phases.len() - 1
    }

    pub fn signal_at(&self, t: f64, link: usize) -> char {
        self.phases[self.phase_index_at(t)].state.as_bytes()[link] as char
    }

    /// Start of phase `index` within the cycle, relative to phase 0.
    pub fn phase_start(&self, index: usize) -> f64 {
        self.phases[..index].iter().map(|p| p.duration).sum()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::Invalid(format!("traffic light {}: {m}", self.id)));
        if self.phases.is_empty() {
            return bad("no phases".into());
        }
        let len = self.link_count();
        for p in &self.phases {
            if !(p.duration > 0.0) {
                return bad(format!("phase duration {}", p.duration));
            }
            if p.state.len() != len {
                return bad("state strings differ in length".into());
            }
            if let Some(c) = p.state.chars().find(|c| !"Ggyr".contains(*c)) {
                return bad(format!("state char `{c}`"));
            }
        }
        if !(self.offset >= 0.0 && self.offset < self.cycle()) {
            return bad(format!("offset {} outside [0, {})", self.offset, self.cycle()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub origin: GeoPoint,
}

impl Projection {
    /// Local equirectangular projection around `origin`.
    pub fn project(&self, p: GeoPoint) -> [f64; 2] {
        use crate::geodata::METERS_PER_DEGREE;
        let x = (p.lon - self.origin.lon) * METERS_PER_DEGREE * self.origin.lat.to_radians().cos();
        let y = (p.lat - self.origin.lat) * METERS_PER_DEGREE;
        [x, y]
    }
}

/// Geometry of an edge that an edit removed, kept so demand can be repaired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedEdge {
    pub id: String,
    pub from_xy: [f64; 2],
    pub to_xy: [f64; 2],
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub nodes: BTreeMap<String, Node>,
    pub edges: BTreeMap<String, Edge>,
    /// Sorted by `(from, to)`.
    pub connections: Vec<Connection>,
    pub traffic_lights: BTreeMap<String, TrafficLight>,
    pub projection: Option<Projection>,
    /// Edges removed by edits since construction.
    pub removed: BTreeMap<String, RemovedEdge>,
    pub warnings: Vec<String>,
}

// Edit history (`removed`, `warnings`) is not part of a network's identity.
impl PartialEq for RoadNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.edges == other.edges
            && self.connections == other.connections
            && self.traffic_lights == other.traffic_lights
            && self.projection == other.projection
    }
}

impl RoadNetwork {
    pub fn edge(&self, id: &str) -> Result<&Edge, NetError> {
        self.edges
            .get(id)
            .ok_or_else(|| NetError::UnknownEdge(id.to_string()))
    }

    /// Connections leaving the end of `edge`.
    pub fn successors<'a>(&'a self, edge: &str) -> &'a [Connection] {
        let lo = self.connections.partition_point(|c| c.from.as_str() < edge);
        let hi = self.connections.partition_point(|c| c.from.as_str() <= edge);
        &self.connections[lo..hi]
    }

    pub fn connection(&self, from: &str, to: &str) -> Option<&Connection> {
        self.successors(from).iter().find(|c| c.to == to)
    }

    pub fn node_xy(&self, id: &str) -> Option<[f64; 2]> {
        self.nodes.get(id).map(|n| [n.x, n.y])
    }

    /// Distinct neighboring nodes, ignoring direction.
    pub fn neighbor_counts(&self) -> BTreeMap<&str, usize> {
        let mut nb: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for e in self.edges.values() {
            nb.entry(&e.from_node).or_default().insert(&e.to_node);
            nb.entry(&e.to_node).or_default().insert(&e.from_node);
        }
        nb.into_iter().map(|(k, v)| (k, v.len())).collect()
    }

    /// Weakly connected components as sets of node ids, largest first
    /// (ties broken by smallest node id).
    pub fn components(&self) -> Vec<BTreeSet<String>> {
        let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in self.edges.values() {
            adj.entry(&e.from_node).or_default().push(&e.to_node);
            adj.entry(&e.to_node).or_default().push(&e.from_node);
        }
        for n in self.nodes.keys() {
            adj.entry(n).or_default();
        }
        let mut seen = BTreeSet::new();
        let mut comps = Vec::new();
        for &start in adj.keys() {
            if seen.contains(start) {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut queue = VecDeque::from([start]);
            seen.insert(start);
            while let Some(n) = queue.pop_front() {
                comp.insert(n.to_string());
                for &m in &adj[n] {
                    if seen.insert(m) {
                        queue.push_back(m);
                    }
                }
            }
            comps.push(comp);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.first().cmp(&b.first())));
        comps
    }

    pub fn is_weakly_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Edges whose street name matches `name` case-insensitively, ordered by id.
    pub fn find_edges_by_name(&self, name: &str) -> Result<Vec<&Edge>, NetError> {
        let wanted = name.trim().to_lowercase();
        if wanted.is_empty() {
            return Err(NetError::EmptyName);
        }
        Ok(self
            .edges
            .values()
            .filter(|e| e.street_name.to_lowercase() == wanted)
            .collect())
    }

    /// Returns a new network without `edge_ids`. Connections touching them are
    /// dropped, signal programs shrink accordingly, and anything no longer in
    /// the largest weakly connected component is pruned with a warning.
    pub fn remove_edges<S: AsRef<str>>(&self, edge_ids: &[S]) -> Result<RoadNetwork, NetError> {
        let doomed: BTreeSet<&str> = edge_ids.iter().map(|s| s.as_ref()).collect();
        if let Some(missing) = doomed.iter().find(|id| !self.edges.contains_key(**id)) {
            return Err(NetError::UnknownEdge(missing.to_string()));
        }
        let mut edges = self.edges.clone();
        let mut removed = self.removed.clone();
        for id in &doomed {
            let e = edges.remove(*id).expect("checked above");
            removed.insert(e.id.clone(), self.tombstone(&e));
        }
        let mut warnings = self.warnings.clone();
        let touched: BTreeSet<String> = doomed
            .iter()
            .flat_map(|id| {
                let e = &self.edges[*id];
                [e.from_node.clone(), e.to_node.clone()]
            })
            .collect();
        let mut net = RoadNetwork {
            nodes: self.nodes.clone(),
            edges,
            connections: Vec::new(),
            traffic_lights: self.traffic_lights.clone(),
            projection: self.projection,
            removed,
            warnings: Vec::new(),
        };
        net.rebuild_after_removal(self, &touched);

        let comps = net.components();
        if comps.len() > 1 {
            let keep = &comps[0];
            let pruned: Vec<String> = net
                .edges
                .values()
                .filter(|e| !keep.contains(&e.from_node))
                .map(|e| e.id.clone())
                .collect();
            let pruned_nodes: usize = comps[1..].iter().map(|c| c.len()).sum();
            warnings.push(format!(
                "edit disconnected the network: pruned {} edge(s) and {} node(s) outside the main component",
                pruned.len(),
                pruned_nodes
            ));
            let mut touched = BTreeSet::new();
            for id in &pruned {
                let e = net.edges.remove(id).expect("present");
                touched.insert(e.from_node.clone());
                touched.insert(e.to_node.clone());
                net.removed.insert(e.id.clone(), self.tombstone_or(&e));
            }
            net.nodes.retain(|id, _| keep.contains(id));
            let before = net.clone();
            net.rebuild_after_removal(&before, &touched);
        }
        net.warnings = warnings;
        Ok(net)
    }

    fn tombstone(&self, e: &Edge) -> RemovedEdge {
        RemovedEdge {
            id: e.id.clone(),
            from_xy: self.node_xy(&e.from_node).unwrap_or(e.shape[0]),
            to_xy: self.node_xy(&e.to_node).unwrap_or(e.shape[e.shape.len() - 1]),
        }
    }

    fn tombstone_or(&self, e: &Edge) -> RemovedEdge {
        RemovedEdge {
            id: e.id.clone(),
            from_xy: e.shape[0],
            to_xy: e.shape[e.shape.len() - 1],
        }
    }

    /// Recomputes connections at `touched` nodes and remaps the signal programs
    /// there, preserving the signal of every surviving movement.
    fn rebuild_after_removal(&mut self, old: &RoadNetwork, touched: &BTreeSet<String>) {
        // drop nodes that lost all edges
        let mut used = BTreeSet::new();
        for e in self.edges.values() {
            used.insert(e.from_node.clone());
            used.insert(e.to_node.clone());
        }
        self.nodes.retain(|id, _| used.contains(id));

        let mut conns: Vec<Connection> = old
            .connections
            .iter()
            .filter(|c| {
                self.edges.contains_key(&c.from)
                    && self.edges.contains_key(&c.to)
                    && !touched.contains(&old.edges[&c.from].to_node)
            })
            .cloned()
            .collect();
        for node in touched {
            if self.nodes.contains_key(node) {
                conns.extend(default_connections_at(&self.edges, node));
            }
        }
        conns.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
        self.connections = conns;

        for node in touched {
            let Some(old_tl) = old.traffic_lights.get(node) else {
                continue;
            };
            let mut tl = old_tl.clone();
            let links: Vec<usize> = self
                .connections
                .iter()
                .enumerate()
                .filter(|(_, c)| self.edges[&c.from].to_node == *node)
                .map(|(i, _)| i)
                .collect();
            if links.is_empty() || !self.nodes.contains_key(node) {
                self.traffic_lights.remove(node);
                for c in &mut self.connections {
                    if c.tl.as_deref() == Some(node.as_str()) {
                        c.tl = None;
                        c.link_index = None;
                    }
                }
                continue;
            }
            // old signal column per (from, to), and a fallback per from-edge
            let old_col = |from: &str, to: &str| -> Option<usize> {
                old.connection(from, to).and_then(|c| c.link_index)
            };
            let fallback_col = |from: &str| -> Option<usize> {
                old.successors(from).iter().find_map(|c| c.link_index)
            };
            let cols: Vec<Option<usize>> = links
                .iter()
                .map(|&i| {
                    let c = &self.connections[i];
                    old_col(&c.from, &c.to).or_else(|| fallback_col(&c.from))
                })
                .collect();
            for phase in &mut tl.phases {
                let old_state = phase.state.as_bytes();
                phase.state = cols
                    .iter()
                    .map(|col| col.map_or('r', |k| old_state[k] as char))
                    .collect();
            }
            for (k, &i) in links.iter().enumerate() {
                self.connections[i].tl = Some(node.clone());
                self.connections[i].link_index = Some(k);
            }
            self.traffic_lights.insert(node.clone(), tl);
        }
        self.refresh_junction_flags();
    }

    pub(crate) fn refresh_junction_flags(&mut self) {
        let degree: BTreeMap<String, usize> = self
            .neighbor_counts()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        for (id, node) in self.nodes.iter_mut() {
            node.is_junction =
                degree.get(id).copied().unwrap_or(0) >= 3 || self.traffic_lights.contains_key(id);
        }
    }

    /// Returns a new network with one lane fewer on `edge_id`. Remaining lane
    /// indices stay dense.
    pub fn remove_lane(&self, edge_id: &str, lane_index: usize) -> Result<RoadNetwork, NetError> {
        let edge = self.edge(edge_id)?;
        if lane_index >= edge.lane_count as usize {
            return Err(NetError::UnknownLane {
                edge: edge_id.to_string(),
                lane: lane_index,
            });
        }
        if edge.lane_count < 2 {
            return Err(NetError::LastLane(edge_id.to_string()));
        }
        let mut net = self.clone();
        net.edges.get_mut(edge_id).expect("exists").lane_count -= 1;
        Ok(net)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), NetError> {
        for e in self.edges.values() {
            let (Some(a), Some(b)) = (self.node_xy(&e.from_node), self.node_xy(&e.to_node)) else {
                return Err(NetError::Invalid(format!("edge {} has unknown endpoint", e.id)));
            };
            if e.from_node == e.to_node {
                return Err(NetError::Invalid(format!("edge {} is a loop", e.id)));
            }
            let straight = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            if !(e.length > 0.0) || e.length < straight - 1e-6 {
                return Err(NetError::Invalid(format!("edge {} has length {}", e.id, e.length)));
            }
            if e.lane_count < 1 || !(e.speed_limit > 0.0) || e.shape.len() < 2 {
                return Err(NetError::Invalid(format!("edge {} lanes/speed/shape", e.id)));
            }
        }
        for c in &self.connections {
            if !self.edges.contains_key(&c.from) || !self.edges.contains_key(&c.to) {
                return Err(NetError::Invalid(format!("connection {}->{}", c.from, c.to)));
            }
            if let (Some(tl), Some(k)) = (&c.tl, c.link_index) {
                let light = self
                    .traffic_lights
                    .get(tl)
                    .ok_or_else(|| NetError::Invalid(format!("unknown light {tl}")))?;
                if k >= light.link_count() {
                    return Err(NetError::Invalid(format!("link index {k} at {tl}")));
                }
            }
        }
        for tl in self.traffic_lights.values() {
            tl.validate()?;
        }
        Ok(())
    }
}

fn polyline_length(shape: &[[f64; 2]]) -> f64 {
    shape
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

/// Every incoming edge connects to every outgoing edge except the reverse
/// direction, which is only allowed at dead ends.
fn default_connections_at(edges: &BTreeMap<String, Edge>, node: &str) -> Vec<Connection> {
    let incoming: Vec<&Edge> = edges.values().filter(|e| e.to_node == node).collect();
    let outgoing: Vec<&Edge> = edges.values().filter(|e| e.from_node == node).collect();
    let mut out = Vec::new();
    for e in &incoming {
        let forward: Vec<&&Edge> = outgoing.iter().filter(|f| f.to_node != e.from_node).collect();
        let targets: Vec<&&Edge> = if forward.is_empty() {
            outgoing.iter().collect()
        } else {
            forward
        };
        for f in targets {
            out.push(Connection {
                from: e.id.clone(),
                to: f.id.clone(),
                tl: None,
                link_index: None,
            });
        }
    }
    out
}

/// Inputs for assembling a network: nodes, edges and which nodes carry signals.
#[derive(Debug, Default)]
pub struct NetworkBuilder {
    nodes: BTreeMap<String, [f64; 2]>,
    edges: BTreeMap<String, Edge>,
    signals: BTreeSet<String>,
    projection: Option<Projection>,
}

/// Parameters of one directed edge for [`NetworkBuilder::add_edge`].
#[derive(Debug, Clone)]
pub struct EdgeSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub street_name: String,
    pub lane_count: u32,
    pub speed_limit: f64,
    pub priority: i32,
    /// Intermediate shape points; endpoints are added from the nodes.
    pub via: Vec<[f64; 2]>,
    /// Overrides the polyline length when longer.
    pub length: Option<f64>,
}

impl EdgeSpec {
    pub fn new(id: impl Into<String>, from: impl Into<String>, to: impl Into<String>) -> Self {
        EdgeSpec {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            street_name: String::new(),
            lane_count: 1,
            speed_limit: 13.89,
            priority: 1,
            via: Vec::new(),
            length: None,
        }
    }

    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.street_name = name.into();
        self
    }

    pub fn lanes(mut self, lanes: u32) -> Self {
        self.lane_count = lanes;
        self
    }

    pub fn speed(mut self, speed: f64) -> Self {
        self.speed_limit = speed;
        self
    }

    pub fn priority(mut self, priority: i32) -> Self {
        self.priority = priority;
        self
    }

    pub fn length(mut self, length: f64) -> Self {
        self.length = Some(length);
        self
    }

    pub fn via(mut self, via: Vec<[f64; 2]>) -> Self {
        self.via = via;
        self
    }
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn projection(mut self, projection: Projection) -> Self {
        self.projection = Some(projection);
        self
    }

    pub fn add_node(&mut self, id: impl Into<String>, x: f64, y: f64) -> &mut Self {
        self.nodes.insert(id.into(), [x, y]);
        self
    }

    pub fn add_edge(&mut self, spec: EdgeSpec) -> Result<&mut Self, NetError> {
        let a = *self
            .nodes
            .get(&spec.from)
            .ok_or_else(|| NetError::UnknownNode(spec.from.clone()))?;
        let b = *self
            .nodes
            .get(&spec.to)
            .ok_or_else(|| NetError::UnknownNode(spec.to.clone()))?;
        if spec.from == spec.to {
            return Err(NetError::Invalid(format!("edge {} is a loop", spec.id)));
        }
        if spec.lane_count < 1 || !(spec.speed_limit > 0.0) {
            return Err(NetError::Invalid(format!("edge {} lanes/speed", spec.id)));
        }
        let mut shape = Vec::with_capacity(spec.via.len() + 2);
        shape.push(a);
        shape.extend(spec.via.iter().copied());
        shape.push(b);
        let geometric = polyline_length(&shape);
        let length = spec.length.map_or(geometric, |l| l.max(geometric));
        if !(length > 0.0) {
            return Err(NetError::Invalid(format!("edge {} has zero length", spec.id)));
        }
        self.edges.insert(
            spec.id.clone(),
            Edge {
                id: spec.id,
                from_node: spec.from,
                to_node: spec.to,
                street_name: spec.street_name,
                length,
                lane_count: spec.lane_count,
                speed_limit: spec.speed_limit,
                priority: spec.priority,
                shape,
            },
        );
        Ok(self)
    }

    pub fn signalize(&mut self, node: impl Into<String>) -> &mut Self {
        self.signals.insert(node.into());
        self
    }

    /// Assembles the network with default connections and a default fixed-time
    /// program at every signalized node that has controlled movements.
    pub fn build(self) -> Result<RoadNetwork, NetError> {
        if self.edges.is_empty() {
            return Err(NetError::EmptyNetwork);
        }
        let mut used = BTreeSet::new();
        for e in self.edges.values() {
            used.insert(e.from_node.as_str());
            used.insert(e.to_node.as_str());
        }
        let nodes: BTreeMap<String, Node> = self
            .nodes
            .iter()
            .filter(|(id, _)| used.contains(id.as_str()))
            .map(|(id, xy)| {
                (
                    id.clone(),
                    Node {
                        id: id.clone(),
                        x: xy[0],
                        y: xy[1],
                        is_junction: false,
                    },
                )
            })
            .collect();
        let mut connections: Vec<Connection> = nodes
            .keys()
            .flat_map(|n| default_connections_at(&self.edges, n))
            .collect();
        connections.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));

        let mut traffic_lights = BTreeMap::new();
        for node in self.signals.iter().filter(|n| nodes.contains_key(*n)) {
            let links: Vec<usize> = connections
                .iter()
                .enumerate()
                .filter(|(_, c)| self.edges[&c.from].to_node == *node)
                .map(|(i, _)| i)
                .collect();
            if links.is_empty() {
                continue;
            }
            let groups = approach_groups(&self.edges, &connections, &links);
            for (k, &i) in links.iter().enumerate() {
                connections[i].tl = Some(node.clone());
                connections[i].link_index = Some(k);
            }
            traffic_lights.insert(node.clone(), default_program(node, &groups));
        }
        let mut net = RoadNetwork {
            nodes,
            edges: self.edges,
            connections,
            traffic_lights,
            projection: self.projection,
            removed: BTreeMap::new(),
            warnings: Vec::new(),
        };
        net.refresh_junction_flags();
        net.validate()?;
        Ok(net)
    }
}

/// Splits the controlled links of a junction into two approach groups by the
/// axis of their incoming edge. Returns the group (0 or 1) of each link.
fn approach_groups(edges: &BTreeMap<String, Edge>, conns: &[Connection], links: &[usize]) -> Vec<u8> {
    let headings: Vec<f64> = links
        .iter()
        .map(|&i| edges[&conns[i].from].end_heading())
        .collect();
    let reference = headings[0];
    headings
        .iter()
        .map(|h| {
            // parallel or antiparallel approaches share a group
            if (h - reference).cos().abs() >= std::f64::consts::FRAC_1_SQRT_2 {
                0
            } else {
                1
            }
        })
        .collect()
}

fn default_program(id: &str, groups: &[u8]) -> TrafficLight {
    let state = |group: u8, on: char| -> String {
        groups.iter().map(|&g| if g == group { on } else { 'r' }).collect()
    };
    TrafficLight {
        id: id.to_string(),
        program_id: "0".into(),
        offset: 0.0,
        phases: vec![
            Phase::new(DEFAULT_GREEN, state(0, 'G')),
            Phase::new(DEFAULT_YELLOW, state(0, 'y')),
            Phase::new(DEFAULT_GREEN, state(1, 'G')),
            Phase::new(DEFAULT_YELLOW, state(1, 'y')),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// a -> b -> c plus the reverse, b signalized, and a spur b -> d.
    fn small() -> RoadNetwork {
        let mut b = NetworkBuilder::new();
        b.add_node("a", 0.0, 0.0)
            .add_node("b", 100.0, 0.0)
            .add_node("c", 200.0, 0.0)
            .add_node("d", 100.0, 100.0);
        for (id, f, t, name) in [
            ("ab", "a", "b", "Main Street"),
            ("ba", "b", "a", "Main Street"),
            ("bc", "b", "c", "Main Street"),
            ("cb", "c", "b", "Main Street"),
            ("bd", "b", "d", "Spur Road"),
            ("db", "d", "b", "Spur Road"),
        ] {
            b.add_edge(EdgeSpec::new(id, f, t).name(name).lanes(2)).unwrap();
        }
        b.signalize("b");
        b.build().unwrap()
    }

    #[test]
    fn builder_connections_skip_u_turns_except_dead_ends() {
        let net = small();
        let succ: Vec<&str> = net.successors("ab").iter().map(|c| c.to.as_str()).collect();
        assert_eq!(succ, vec!["bc", "bd"]);
        // dead end at c: only the U-turn remains
        let succ: Vec<&str> = net.successors("bc").iter().map(|c| c.to.as_str()).collect();
        assert_eq!(succ, vec!["cb"]);
        net.validate().unwrap();
    }

    #[test]
    fn default_program_shape() {
        let net = small();
        let tl = &net.traffic_lights["b"];
        assert_eq!(tl.cycle(), 70.0);
        assert_eq!(tl.phases.len(), 4);
        assert_eq!(tl.link_count(), 6);
        assert!(net.nodes["b"].is_junction);
        assert!(!net.nodes["a"].is_junction);
        // both axes get a green
        assert!(tl.phases[0].has_green() && tl.phases[2].has_green());
        assert!(tl.phases[1].is_yellow());
    }

    #[test]
    fn phase_lookup_honours_offset() {
        let mut tl = small().traffic_lights["b"].clone();
        assert_eq!(tl.phase_index_at(0.0), 0);
        assert_eq!(tl.phase_index_at(31.0), 1);
        assert_eq!(tl.phase_index_at(69.9), 3);
        assert_eq!(tl.phase_index_at(70.0), 0);
        tl.offset = 10.0;
        assert_eq!(tl.phase_index_at(8.0), 3);
        assert_eq!(tl.phase_index_at(5.0), 2);
        assert_eq!(tl.phase_index_at(10.0), 0);
    }

    #[test]
    fn find_by_name_is_case_insensitive_and_sorted() {
        let net = small();
        let ids: Vec<&str> = net
            .find_edges_by_name("main STREET")
            .unwrap()
            .iter()
            .map(|e| e.id.as_str())
            .collect();
        assert_eq!(ids, vec!["ab", "ba", "bc", "cb"]);
        assert!(net.find_edges_by_name("Nowhere").unwrap().is_empty());
        assert_eq!(net.find_edges_by_name("  "), Err(NetError::EmptyName));
    }

    #[test]
    fn remove_edges_unknown() {
        assert_eq!(
            small().remove_edges(&["zz"]),
            Err(NetError::UnknownEdge("zz".into()))
        );
    }

    #[test]
    fn remove_street_drops_exactly_its_edges_and_keeps_original() {
        let net = small();
        let spur: Vec<String> = net
            .find_edges_by_name("Spur Road")
            .unwrap()
            .iter()
            .map(|e| e.id.clone())
            .collect();
        let out = net.remove_edges(&spur).unwrap();
        assert_eq!(out.edges.len(), net.edges.len() - spur.len());
        assert_eq!(net.edges.len(), 6);
        assert!(!out.nodes.contains_key("d"));
        out.validate().unwrap();
        // signal program shrank but kept its phase structure
        let tl = &out.traffic_lights["b"];
        assert_eq!(tl.link_count(), out.connections.iter().filter(|c| c.tl.is_some()).count());
        assert_eq!(out.removed.len(), 2);
    }

    #[test]
    fn removing_a_bridge_prunes_the_smaller_side() {
        // two triangles joined by a single two-way bridge
        let mut b = NetworkBuilder::new();
        for (id, x, y) in [
            ("a1", 0.0, 0.0),
            ("a2", 50.0, 80.0),
            ("a3", 100.0, 0.0),
            ("b1", 300.0, 0.0),
            ("b2", 350.0, 80.0),
        ] {
            b.add_node(id, x, y);
        }
        let pairs = [("a1", "a2"), ("a2", "a3"), ("a3", "a1"), ("b1", "b2"), ("a3", "b1")];
        for (f, t) in pairs {
            b.add_edge(EdgeSpec::new(format!("{f}{t}"), f, t)).unwrap();
            b.add_edge(EdgeSpec::new(format!("{t}{f}"), t, f)).unwrap();
        }
        let net = b.build().unwrap();
        assert!(net.is_weakly_connected());
        let out = net.remove_edges(&["a3b1", "b1a3"]).unwrap();
        assert!(out.is_weakly_connected());
        assert_eq!(out.edges.len(), 6);
        assert!(!out.nodes.contains_key("b1") && !out.nodes.contains_key("b2"));
        assert_eq!(out.warnings.len(), 1);
        assert!(out.removed.contains_key("b1b2"));
        out.validate().unwrap();
    }

    #[test]
    fn remove_edges_commutes_and_is_idempotent() {
        let net = small();
        let ab = net.remove_edges(&["ab"]).unwrap().remove_edges(&["cb"]).unwrap();
        let ba = net.remove_edges(&["cb"]).unwrap().remove_edges(&["ab"]).unwrap();
        let both = net.remove_edges(&["ab", "cb", "ab"]).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab, both);
    }

    #[test]
    fn remove_lane_rules() {
        let net = small();
        let out = net.remove_lane("ab", 0).unwrap();
        assert_eq!(out.edges["ab"].lane_count, 1);
        assert_eq!(net.edges["ab"].lane_count, 2);
        assert_eq!(out.remove_lane("ab", 0), Err(NetError::LastLane("ab".into())));
        assert!(matches!(net.remove_lane("ab", 2), Err(NetError::UnknownLane { .. })));
        assert!(matches!(net.remove_lane("nope", 0), Err(NetError::UnknownEdge(_))));
    }

    #[test]
    fn builder_rejects_bad_edges() {
        let mut b = NetworkBuilder::new();
        b.add_node("a", 0.0, 0.0).add_node("b", 1.0, 0.0);
        assert!(b.add_edge(EdgeSpec::new("x", "a", "zz")).is_err());
        assert!(b.add_edge(EdgeSpec::new("x", "a", "a")).is_err());
        assert!(b.add_edge(EdgeSpec::new("x", "a", "b").lanes(0)).is_err());
        assert_eq!(NetworkBuilder::new().build(), Err(NetError::EmptyNetwork));
    }

    #[test]
    fn traffic_light_validation() {
        let mut tl = small().traffic_lights["b"].clone();
        tl.offset = 70.0;
        assert!(tl.validate().is_err());
        tl.offset = 0.0;
        tl.phases[1].state.push('G');
        assert!(tl.validate().is_err());
    }
}
