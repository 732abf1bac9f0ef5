//! Vehicle types, trip generation, routing and route files.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::RoadNetwork;
use crate::xml::{self, num, XmlWriter};

/// Resamples allowed per unroutable origin/destination pair.
pub const MAX_RETRIES: usize = 10;

const TRIP_STREAM: u64 = 0;
const MIX_STREAM: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemandError {
    #[error("no path from `{from}` to `{to}`")]
    NoPath { from: String, to: String },
    #[error("Entered Roads are not in the current network: `{0}`")]
    UnknownEdge(String),
    #[error("network needs at least two route-connected edges")]
    NetworkTooSmall,
    #[error("invalid demand parameters: {0}")]
    InvalidParameters(String),
    #[error("malformed route XML: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propulsion {
    Gasoline,
    Electric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleType {
    pub id: String,
    pub propulsion: Propulsion,
    pub length: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    pub max_speed: f64,
}

impl VehicleType {
    pub fn gasoline() -> Self {
        VehicleType {
            id: "gasoline".into(),
            propulsion: Propulsion::Gasoline,
            length: 5.0,
            max_accel: 2.6,
            max_decel: 4.5,
            max_speed: 55.6,
        }
    }

    pub fn electric() -> Self {
        VehicleType {
            id: "electric".into(),
            propulsion: Propulsion::Electric,
            max_accel: 2.8,
            ..Self::gasoline()
        }
    }

    pub fn emission_class(&self) -> &'static str {
        match self.propulsion {
            Propulsion::Gasoline => "HBEFA3/PC_G_EU4",
            Propulsion::Electric => "Energy/unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub id: String,
    pub depart: f64,
    pub route: Vec<String>,
    pub vtype: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub ev_proportion: f64,
}

impl MixSpec {
    pub fn new(ev_proportion: f64) -> Result<Self, DemandError> {
        if !(0.0..=1.0).contains(&ev_proportion) {
            return Err(DemandError::InvalidParameters(format!(
                "ev proportion {ev_proportion} outside [0, 1]"
            )));
        }
        Ok(MixSpec { ev_proportion })
    }

    pub fn gasoline_proportion(&self) -> f64 {
        1.0 - self.ev_proportion
    }
}

impl Default for MixSpec {
    fn default() -> Self {
        MixSpec { ev_proportion: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSet {
    pub vtypes: Vec<VehicleType>,
    /// Sorted by depart, then id.
    pub trips: Vec<Trip>,
    pub duration: f64,
    /// OD pairs given up on after [`MAX_RETRIES`] resamples.
    pub unroutable: usize,
    /// Trips dropped by rerouting because no path survived.
    pub dropped: usize,
}

impl DemandSet {
    pub fn empty(duration: f64) -> Self {
        DemandSet {
            vtypes: vec![VehicleType::gasoline(), VehicleType::electric()],
            trips: Vec::new(),
            duration,
            unroutable: 0,
            dropped: 0,
        }
    }

    pub fn vtype(&self, id: &str) -> Option<&VehicleType> {
        self.vtypes.iter().find(|v| v.id == id)
    }

    pub fn count_of(&self, propulsion: Propulsion) -> usize {
        self.trips
            .iter()
            .filter(|t| self.vtype(&t.vtype).map(|v| v.propulsion) == Some(propulsion))
            .count()
    }

    fn sort(&mut self) {
        self.trips.sort_by(|a, b| {
            a.depart
                .total_cmp(&b.depart)
                .then_with(|| natural_cmp(&a.id, &b.id))
        });
    }
}

/// Orders "veh2" before "veh10".
fn natural_cmp(a: &str, b: &str) -> Ordering {
    let split = |s: &str| {
        let digits = s.len() - s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (head, tail) = s.split_at(s.len() - digits);
        (head.to_string(), tail.parse::<u64>().ok())
    };
    let (ha, na) = split(a);
    let (hb, nb) = split(b);
    ha.cmp(&hb).then(na.cmp(&nb)).then_with(|| a.cmp(b))
}

// ---------------------------------------------------------------------------
// Routing

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    Distance,
    Time,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Edge-graph Dijkstra with precomputed adjacency, for repeated queries.
pub struct Router<'a> {
    ids: Vec<&'a str>,
    index: BTreeMap<&'a str, usize>,
    cost: Vec<f64>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
}

impl<'a> Router<'a> {
    pub fn new(net: &'a RoadNetwork, weight: Weight) -> Self {
        let ids: Vec<&str> = net.edges.keys().map(String::as_str).collect();
        let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let cost = net
            .edges
            .values()
            .map(|e| match weight {
                Weight::Distance => e.length,
                Weight::Time => e.free_flow_time(),
            })
            .collect();
        let mut succ = vec![Vec::new(); ids.len()];
        let mut pred = vec![Vec::new(); ids.len()];
        for c in &net.connections {
            if let (Some(&a), Some(&b)) = (index.get(c.from.as_str()), index.get(c.to.as_str())) {
                succ[a].push(b);
                pred[b].push(a);
            }
        }
        // successors in id order so the greedy walk meets the smallest id first
        for s in &mut succ {
            s.sort_unstable();
            s.dedup();
        }
        Router {
            ids,
            index,
            cost,
            succ,
            pred,
        }
    }

    fn idx(&self, id: &str) -> Result<usize, DemandError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| DemandError::UnknownEdge(id.to_string()))
    }

    /// Cost from each edge (inclusive) to the end of `target`.
    fn to_target(&self, target: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.ids.len()];
        dist[target] = self.cost[target];
        let mut heap = BinaryHeap::from([Entry(dist[target], target)]);
        while let Some(Entry(d, e)) = heap.pop() {
            if d > dist[e] {
                continue;
            }
            for &p in &self.pred[e] {
                let nd = d + self.cost[p];
                if nd < dist[p] {
                    dist[p] = nd;
                    heap.push(Entry(nd, p));
                }
            }
        }
        dist
    }

    /// Minimum-cost edge sequence from `from` to `to`, both inclusive. Among
    /// equal-cost paths the lexicographically smallest id sequence wins.
    pub fn route(&self, from: &str, to: &str) -> Result<Vec<String>, DemandError> {
        let a = self.idx(from)?;
        let b = self.idx(to)?;
        if a == b {
            return Ok(vec![from.to_string()]);
        }
        let dist = self.to_target(b);
        if !dist[a].is_finite() {
            return Err(DemandError::NoPath {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        let tol = |d: f64| 1e-9 * d.abs().max(1.0);
        let mut path = vec![a];
        let mut cur = a;
        while cur != b {
            let remaining = dist[cur] - self.cost[cur];
            let next = self.succ[cur]
                .iter()
                .copied()
                .filter(|&s| (dist[s] - remaining).abs() <= tol(remaining))
                .min_by(|&x, &y| self.ids[x].cmp(self.ids[y]))
                .expect("a successor lies on an optimal path");
            path.push(next);
            cur = next;
        }
        Ok(path.into_iter().map(|i| self.ids[i].to_string()).collect())
    }

    pub fn path_cost(&self, path: &[String]) -> Option<f64> {
        path.iter()
            .map(|id| self.index.get(id.as_str()).map(|&i| self.cost[i]))
            .sum()
    }
}

pub fn shortest_path(
    net: &RoadNetwork,
    from_edge: &str,
    to_edge: &str,
    weight: Weight,
) -> Result<Vec<String>, DemandError> {
    Router::new(net, weight).route(from_edge, to_edge)
}

/// Every consecutive pair is connected and every edge exists.
pub fn route_is_valid(net: &RoadNetwork, route: &[String]) -> bool {
    !route.is_empty()
        && route.iter().all(|e| net.edges.contains_key(e))
        && route.windows(2).all(|w| net.connection(&w[0], &w[1]).is_some())
}

// ---------------------------------------------------------------------------
// Generation

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Cumulative sampling weights: edge length, doubled for edges touching a
/// dead-end node.
fn od_weights(net: &RoadNetwork) -> Vec<(String, f64)> {
    let degree = net.neighbor_counts();
    let mut acc = 0.0;
    net.edges
        .values()
        .map(|e| {
            let fringe = degree.get(e.from_node.as_str()) == Some(&1)
                || degree.get(e.to_node.as_str()) == Some(&1);
            acc += e.length * if fringe { 2.0 } else { 1.0 };
            (e.id.clone(), acc)
        })
        .collect()
}

fn sample<'a>(cum: &'a [(String, f64)], r: &mut ChaCha8Rng) -> &'a str {
    let total = cum.last().expect("non-empty").1;
    let x = r.gen::<f64>() * total;
    let i = cum.partition_point(|(_, c)| *c <= x).min(cum.len() - 1);
    &cum[i].0
}

fn assign_mix(trips: &mut [Trip], mix: MixSpec, seed: u64) {
    let mut r = rng(seed, MIX_STREAM);
    for t in trips {
        let u: f64 = r.gen();
        t.vtype = if u < mix.ev_proportion {
            VehicleType::electric().id
        } else {
            VehicleType::gasoline().id
        };
    }
}

/// `round(volume · duration / 3600)` trips with uniform departures, length-
/// weighted fringe-biased endpoints and fastest-path routes.
pub fn random_trips(
    net: &RoadNetwork,
    volume_per_hour: f64,
    duration: f64,
    seed: u64,
    mix: MixSpec,
) -> Result<DemandSet, DemandError> {
    if !(volume_per_hour > 0.0) || !(duration > 0.0) {
        return Err(DemandError::InvalidParameters(format!(
            "volume {volume_per_hour} and duration {duration} must be positive"
        )));
    }
    if net.edges.len() < 2 || net.connections.iter().all(|c| c.from == c.to) {
        return Err(DemandError::NetworkTooSmall);
    }
    let n = (volume_per_hour * duration / 3600.0).round() as usize;
    let router = Router::new(net, Weight::Time);
    let cum = od_weights(net);
    let mut r = rng(seed, TRIP_STREAM);

    let mut departs: Vec<f64> = (0..n).map(|_| r.gen::<f64>() * duration).collect();
    departs.sort_by(f64::total_cmp);

    let mut set = DemandSet::empty(duration);
    for depart in departs {
        let mut routed = None;
        for _ in 0..=MAX_RETRIES {
            let o = sample(&cum, &mut r);
            let d = sample(&cum, &mut r);
            if o == d {
                continue;
            }
            if let Ok(route) = router.route(o, d) {
                routed = Some(route);
                break;
            }
        }
        match routed {
            Some(route) => set.trips.push(Trip {
                id: format!("veh{}", set.trips.len()),
                depart,
                route,
                vtype: String::new(),
            }),
            None => set.unroutable += 1,
        }
    }
    assign_mix(&mut set.trips, mix, seed);
    Ok(set)
}

/// Appends one fastest-path trip from `origin` to `dest`.
pub fn add_vehicle(
    net: &RoadNetwork,
    demand: &DemandSet,
    origin: &str,
    dest: &str,
    depart: f64,
) -> Result<DemandSet, DemandError> {
    if !(depart >= 0.0) {
        return Err(DemandError::InvalidParameters(format!("depart {depart}")));
    }
    let route = shortest_path(net, origin, dest, Weight::Time)?;
    let mut k = demand.trips.len();
    let id = loop {
        let candidate = format!("added{k}");
        if demand.trips.iter().all(|t| t.id != candidate) {
            break candidate;
        }
        k += 1;
    };
    let mut out = demand.clone();
    out.trips.push(Trip {
        id,
        depart,
        route,
        vtype: VehicleType::gasoline().id,
    });
    out.sort();
    Ok(out)
}

/// Redraws every trip's vehicle type; routes and departures are untouched.
/// Draws are coupled across proportions: raising the EV share with the same
/// seed only converts gasoline trips to electric.
pub fn set_vehicle_mix(demand: &DemandSet, mix: MixSpec, seed: u64) -> DemandSet {
    let mut out = demand.clone();
    assign_mix(&mut out.trips, mix, seed);
    out
}

fn nearest_surviving(net: &RoadNetwork, gone: &crate::netmodel::RemovedEdge) -> Option<String> {
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    net.edges
        .values()
        .filter_map(|e| {
            let f = net.node_xy(&e.from_node)?;
            let t = net.node_xy(&e.to_node)?;
            Some((dist(f, gone.from_xy) + dist(t, gone.to_xy), &e.id))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, id)| id.clone())
}

/// Re-routes trips broken by network edits between their terminal edges,
/// substituting the nearest surviving edge for a removed terminal. Trips that
/// cannot be repaired are dropped and counted.
pub fn reroute_invalidated(net: &RoadNetwork, demand: &DemandSet) -> DemandSet {
    let router = Router::new(net, Weight::Time);
    let terminal = |id: &str| -> Option<String> {
        if net.edges.contains_key(id) {
            Some(id.to_string())
        } else {
            net.removed.get(id).and_then(|g| nearest_surviving(net, g))
        }
    };
    let mut out = demand.clone();
    out.trips.clear();
    for t in &demand.trips {
        if route_is_valid(net, &t.route) {
            out.trips.push(t.clone());
            continue;
        }
        let first = t.route.first().and_then(|e| terminal(e));
        let last = t.route.last().and_then(|e| terminal(e));
        match (first, last) {
            (Some(a), Some(b)) => match router.route(&a, &b) {
                Ok(route) => out.trips.push(Trip {
                    route,
                    ..t.clone()
                }),
                Err(_) => out.dropped += 1,
            },
            _ => out.dropped += 1,
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Route files

pub fn emit_rou_xml(demand: &DemandSet) -> Vec<u8> {
    let mut sorted = demand.clone();
    sorted.sort();
    let mut w = XmlWriter::new();
    w.open("routes", &[]);
    for v in &sorted.vtypes {
        w.empty(
            "vType",
            &[
                ("id", v.id.clone()),
                ("accel", num(v.max_accel)),
                ("decel", num(v.max_decel)),
                ("length", num(v.length)),
                ("maxSpeed", num(v.max_speed)),
                ("emissionClass", v.emission_class().into()),
            ],
        );
    }
    for t in &sorted.trips {
        w.open(
            "vehicle",
            &[
                ("id", t.id.clone()),
                ("type", t.vtype.clone()),
                ("depart", num(t.depart)),
            ],
        );
        w.empty("route", &[("edges", t.route.join(" "))]);
        w.close();
    }
    w.finish()
}

/// Reads a route file written by [`emit_rou_xml`]. The duration is not stored
/// in the file and is taken from the caller.
pub fn parse_rou_xml(bytes: &[u8], duration: f64) -> Result<DemandSet, DemandError> {
    let root = xml::parse_document(bytes).map_err(DemandError::Parse)?;
    if root.name != "routes" {
        return Err(DemandError::Parse(format!("root is <{}>, not <routes>", root.name)));
    }
    let mut vtypes = Vec::new();
    for v in root.children_named("vType") {
        let propulsion = match v.req("emissionClass").map_err(DemandError::Parse)? {
            c if c.starts_with("Energy") => Propulsion::Electric,
            _ => Propulsion::Gasoline,
        };
        vtypes.push(VehicleType {
            id: v.req("id").map_err(DemandError::Parse)?.to_string(),
            propulsion,
            length: v.parse_attr("length").map_err(DemandError::Parse)?,
            max_accel: v.parse_attr("accel").map_err(DemandError::Parse)?,
            max_decel: v.parse_attr("decel").map_err(DemandError::Parse)?,
            max_speed: v.parse_attr("maxSpeed").map_err(DemandError::Parse)?,
        });
    }
    let mut trips = Vec::new();
    for v in root.children_named("vehicle") {
        let route = v
            .child("route")
            .ok_or_else(|| DemandError::Parse("vehicle without route".into()))?;
        let edges: Vec<String> = route
            .req("edges")
            .map_err(DemandError::Parse)?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        if edges.is_empty() {
            return Err(DemandError::Parse("empty route".into()));
        }
        trips.push(Trip {
            id: v.req("id").map_err(DemandError::Parse)?.to_string(),
            depart: v.parse_attr("depart").map_err(DemandError::Parse)?,
            route: edges,
            vtype: v.req("type").map_err(DemandError::Parse)?.to_string(),
        });
    }
    let mut set = DemandSet {
        vtypes,
        trips,
        duration,
        unroutable: 0,
        dropped: 0,
    };
    set.sort();
    Ok(set)
}
