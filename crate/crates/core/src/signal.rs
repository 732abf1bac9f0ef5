//! Signal retiming: Webster cycle/green splits per intersection and
//! green-wave offsets along busy corridors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::DemandSet;
use crate::netmodel::{Phase, RoadNetwork, TrafficLight};
use crate::xml::{self, num, XmlWriter};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("oversaturated: critical flow ratio sum {0:.3} is at or above the limit")]
    Oversaturated(f64),
    #[error("infeasible input: {0}")]
    Infeasible(String),
    #[error("coordination needs at least two traffic lights")]
    NoSignals,
    #[error("unknown traffic light `{0}`")]
    UnknownLight(String),
    #[error("malformed additional XML: {0}")]
    Parse(String),
}

/// Tunables of the Webster computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WebsterParams {
    /// Lost time per green phase (s).
    pub lost_per_phase: f64,
    pub yellow: f64,
    pub min_green: f64,
    pub min_cycle: f64,
    pub max_cycle: f64,
    /// Base saturation flow per lane (veh/h).
    pub saturation_per_lane: f64,
    /// Critical ratio sum at which an intersection counts as oversaturated.
    pub y_limit: f64,
}

impl Default for WebsterParams {
    fn default() -> Self {
        WebsterParams {
            lost_per_phase: 5.0,
            yellow: 4.0,
            min_green: 5.0,
            min_cycle: 20.0,
            max_cycle: 120.0,
            saturation_per_lane: 1800.0,
            y_limit: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachFlow {
    /// veh/h
    pub q: f64,
    /// veh/h
    pub s: f64,
}

/// Flows of the approaches served by each green phase, in phase order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebsterInput {
    pub phases: Vec<Vec<ApproachFlow>>,
    pub params: WebsterParams,
}

impl WebsterInput {
    /// One approach per phase with the given flow ratios.
    pub fn from_ratios(ratios: &[f64], lost_per_phase: f64) -> Self {
        WebsterInput {
            phases: ratios
                .iter()
                .map(|&y| vec![ApproachFlow { q: y * 1800.0, s: 1800.0 }])
                .collect(),
            params: WebsterParams {
                lost_per_phase,
                ..WebsterParams::default()
            },
        }
    }

    /// Critical ratio of each phase: the largest q/s among its approaches.
    pub fn critical_ratios(&self) -> Vec<f64> {
        self.phases
            .iter()
            .map(|a| a.iter().map(|f| f.q / f.s).fold(0.0, f64::max))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebsterPlan {
    /// Cycle from the formula before rounding and clamping.
    pub raw_cycle: f64,
    pub cycle: f64,
    /// Effective green per phase; sums to `cycle − L`.
    pub effective_greens: Vec<f64>,
    /// Displayed phases: each green followed by its yellow.
    pub phases: Vec<Phase>,
}

/// Rounds `values` to integers summing to `round(Σ values)`, handing the
/// leftover units to the largest fractional parts (earlier index on ties).
fn largest_remainder(values: &[f64]) -> Vec<f64> {
    let target = values.iter().sum::<f64>().round() as i64;
    let mut out: Vec<i64> = values.iter().map(|v| v.floor() as i64).collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = values[a] - values[a].floor();
        let fb = values[b] - values[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = target - out.iter().sum::<i64>();
    for &i in order.iter().cycle() {
        if left <= 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out.into_iter().map(|v| v as f64).collect()
}

/// Splits `total` proportionally to `weights` with every share at least `min`.
fn split_with_floor(total: f64, weights: &[f64], min: f64) -> Vec<f64> {
    let mut pinned = vec![false; weights.len()];
    loop {
        let free_total = total - min * pinned.iter().filter(|p| **p).count() as f64;
        let free_weight: f64 = weights
            .iter()
            .zip(&pinned)
            .filter(|(_, p)| !**p)
            .map(|(w, _)| w)
            .sum();
        let free_count = pinned.iter().filter(|p| !**p).count() as f64;
        let shares: Vec<f64> = weights
            .iter()
            .zip(&pinned)
            .map(|(w, p)| {
                if *p {
                    min
                } else if free_weight > 0.0 {
                    w / free_weight * free_total
                } else {
                    free_total / free_count
                }
            })
            .collect();
        let newly: Vec<usize> = (0..shares.len())
            .filter(|&i| !pinned[i] && shares[i] < min)
            .collect();
        if newly.is_empty() {
            return shares;
        }
        for i in newly {
            pinned[i] = true;
        }
    }
}

/// Webster's optimum cycle `C = (1.5 L + 5) / (1 − Y)` with greens split in
/// proportion to the critical flow ratios.
///
/// Each displayed green is the effective green plus lost time minus yellow,
/// so phase durations sum to the cycle.
pub fn webster_program(input: &WebsterInput) -> Result<WebsterPlan, SignalError> {
    let p = &input.params;
    let n = input.phases.len();
    if n == 0 {
        return Err(SignalError::Infeasible("no green phases".into()));
    }
    for f in input.phases.iter().flatten() {
        if !(f.q >= 0.0) || !(f.s > 0.0) {
            return Err(SignalError::Infeasible(format!("flow {} / saturation {}", f.q, f.s)));
        }
        if f.q >= f.s {
            return Err(SignalError::Oversaturated(f.q / f.s));
        }
    }
    let ys = input.critical_ratios();
    let y_sum: f64 = ys.iter().sum();
    if y_sum >= p.y_limit {
        return Err(SignalError::Oversaturated(y_sum));
    }
    if y_sum <= 0.0 {
        return Err(SignalError::Infeasible("no demand on any approach".into()));
    }
    let lost = n as f64 * p.lost_per_phase;
    let raw_cycle = (1.5 * lost + 5.0) / (1.0 - y_sum);
    let floor = (lost + n as f64 * p.min_green).ceil();
    let cycle = raw_cycle
        .round()
        .clamp(p.min_cycle, p.max_cycle)
        .max(floor);
    let shares = split_with_floor(cycle - lost, &ys, p.min_green);
    let mut effective_greens = largest_remainder(&shares);
    // with fractional lost time the integer greens miss `cycle − L` slightly
    let residue = cycle - lost - effective_greens.iter().sum::<f64>();
    if residue != 0.0 {
        let i = (0..n)
            .max_by(|&a, &b| effective_greens[a].total_cmp(&effective_greens[b]).then(b.cmp(&a)))
            .expect("n > 0");
        effective_greens[i] += residue;
    }
    let mut phases = Vec::with_capacity(2 * n);
    for g in &effective_greens {
        phases.push(Phase::new(g + p.lost_per_phase - p.yellow, String::new()));
        phases.push(Phase::new(p.yellow, String::new()));
    }
    Ok(WebsterPlan {
        raw_cycle,
        cycle,
        effective_greens,
        phases,
    })
}

/// Green phases of a program shaped as green, yellow, green, yellow, ….
fn green_phase_indices(tl: &TrafficLight) -> Option<Vec<usize>> {
    if tl.phases.len() < 2 || tl.phases.len() % 2 != 0 {
        return None;
    }
    let ok = tl
        .phases
        .chunks(2)
        .all(|pair| !pair[0].is_yellow() && pair[1].is_yellow());
    ok.then(|| (0..tl.phases.len()).step_by(2).collect())
}

/// Through-traffic per incoming edge at the end of that edge (veh/h).
fn through_flows(demand: &DemandSet) -> BTreeMap<&str, f64> {
    let scale = if demand.duration > 0.0 {
        3600.0 / demand.duration
    } else {
        0.0
    };
    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
    for t in &demand.trips {
        for w in t.route.windows(2) {
            *counts.entry(w[0].as_str()).or_default() += scale;
        }
    }
    counts
}

/// Webster inputs for every signalized junction whose program has the
/// green/yellow shape. `q` is the routed through-traffic on each incoming
/// edge; `s` is the base saturation flow times its lane count.
pub fn estimate_flows(
    net: &RoadNetwork,
    demand: &DemandSet,
    params: WebsterParams,
) -> BTreeMap<String, WebsterInput> {
    let flows = through_flows(demand);
    let mut out = BTreeMap::new();
    for (id, tl) in &net.traffic_lights {
        let Some(greens) = green_phase_indices(tl) else {
            continue;
        };
        let mut by_link: BTreeMap<usize, &str> = BTreeMap::new();
        for c in net.connections.iter().filter(|c| c.tl.as_deref() == Some(id.as_str())) {
            if let Some(k) = c.link_index {
                by_link.insert(k, c.from.as_str());
            }
        }
        let phases = greens
            .iter()
            .map(|&pi| {
                let state = tl.phases[pi].state.as_bytes();
                let approaches: BTreeSet<&str> = by_link
                    .iter()
                    .filter(|(k, _)| matches!(state.get(**k), Some(b'G' | b'g')))
                    .map(|(_, e)| *e)
                    .collect();
                approaches
                    .into_iter()
                    .map(|e| ApproachFlow {
                        q: flows.get(e).copied().unwrap_or(0.0),
                        s: params.saturation_per_lane * net.edges[e].lane_count as f64,
                    })
                    .collect()
            })
            .collect();
        out.insert(id.clone(), WebsterInput { phases, params });
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    /// Light id and its new cycle.
    pub adapted: Vec<(String, f64)>,
    /// Light id and the reason it was left alone.
    pub skipped: Vec<(String, String)>,
}

/// Applies Webster timing at every signalized junction with a feasible input.
/// Offsets are left as they are.
pub fn adapt_all(
    net: &RoadNetwork,
    demand: &DemandSet,
    params: WebsterParams,
) -> (RoadNetwork, AdaptReport) {
    let inputs = estimate_flows(net, demand, params);
    let mut out = net.clone();
    let mut report = AdaptReport::default();
    for (id, tl) in &net.traffic_lights {
        let Some(input) = inputs.get(id) else {
            report.skipped.push((id.clone(), "program is not green/yellow alternating".into()));
            continue;
        };
        match webster_program(input) {
            Ok(plan) => {
                let light = out.traffic_lights.get_mut(id).expect("same keys");
                for (phase, timed) in light.phases.iter_mut().zip(&plan.phases) {
                    phase.duration = timed.duration;
                }
                light.program_id = "adapted".into();
                report.adapted.push((id.clone(), plan.cycle));
            }
            Err(e) => report.skipped.push((id.clone(), e.to_string())),
        }
        debug_assert_eq!(tl.phases.len(), out.traffic_lights[id].phases.len());
    }
    (out, report)
}

// ---------------------------------------------------------------------------
// Offsets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorSpec {
    pub lights: Vec<String>,
    /// Distance between consecutive lights (m); one shorter than `lights`.
    pub distances: Vec<f64>,
    /// Progression speed (m/s).
    pub speed: f64,
}

impl CorridorSpec {
    /// `offset_j = (base + cumulative distance to j / speed) mod C_j`.
    pub fn offsets(&self, cycles: &[f64], base: f64) -> Result<Vec<f64>, SignalError> {
        if cycles.len() != self.lights.len() || self.distances.len() + 1 != self.lights.len() {
            return Err(SignalError::Infeasible("corridor shape mismatch".into()));
        }
        if !(self.speed > 0.0) || self.distances.iter().any(|d| !(*d > 0.0)) {
            return Err(SignalError::Infeasible("distances and speed must be positive".into()));
        }
        let mut travelled = 0.0;
        let mut out = Vec::with_capacity(cycles.len());
        for (j, c) in cycles.iter().enumerate() {
            if j > 0 {
                travelled += self.distances[j - 1];
            }
            out.push(wrap(base + travelled / self.speed, *c));
        }
        Ok(out)
    }
}

/// `x mod cycle` in `[0, cycle)`.
fn wrap(x: f64, cycle: f64) -> f64 {
    let r = x.rem_euclid(cycle);
    // rem_euclid can round up to exactly `cycle`
    if r >= cycle {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub spec: CorridorSpec,
    /// Trips following the route this corridor was taken from.
    pub trips: usize,
    /// The incoming/outgoing edge pair at each light.
    pub movements: Vec<(String, String)>,
}

/// Signal sequences along the `k` most-traveled distinct routes that pass at
/// least two lights. Routes are ranked by trip count, then by how many lights
/// they pass, then by edge sequence.
pub fn top_corridors(net: &RoadNetwork, demand: &DemandSet, k: usize) -> Vec<Corridor> {
    let mut counts: BTreeMap<&[String], usize> = BTreeMap::new();
    for t in &demand.trips {
        *counts.entry(t.route.as_slice()).or_default() += 1;
    }
    let mut candidates: Vec<Corridor> = counts
        .into_iter()
        .filter_map(|(route, trips)| corridor_along(net, route).map(|spec| (spec, trips)))
        .map(|((spec, movements), trips)| Corridor { spec, trips, movements })
        .collect();
    candidates.sort_by(|a, b| {
        b.trips
            .cmp(&a.trips)
            .then(b.spec.lights.len().cmp(&a.spec.lights.len()))
    });
    candidates.truncate(k);
    candidates
}

fn corridor_along(net: &RoadNetwork, route: &[String]) -> Option<(CorridorSpec, Vec<(String, String)>)> {
    let mut lights = Vec::new();
    let mut distances = Vec::new();
    let mut movements = Vec::new();
    let mut since_last = 0.0;
    for w in route.windows(2) {
        let e = net.edges.get(&w[0])?;
        since_last += e.length;
        let c = net.connection(&w[0], &w[1])?;
        if let Some(tl) = &c.tl {
            if lights.contains(tl) {
                continue;
            }
            if !lights.is_empty() {
                distances.push(since_last);
            }
            lights.push(tl.clone());
            movements.push((w[0].clone(), w[1].clone()));
            since_last = 0.0;
        }
    }
    if lights.len() < 2 {
        return None;
    }
    // mean speed limit over the edges between the first and the last light
    let edges_between: Vec<&str> = {
        let mut inside = false;
        let mut out = Vec::new();
        let mut seen = 0;
        for w in route.windows(2) {
            if inside {
                out.push(w[0].as_str());
            }
            if net.connection(&w[0], &w[1]).and_then(|c| c.tl.as_ref()).is_some_and(|t| lights.contains(t)) {
                seen += 1;
                inside = seen < lights.len();
            }
        }
        out
    };
    let speed = edges_between
        .iter()
        .map(|e| net.edges[*e].speed_limit)
        .sum::<f64>()
        / edges_between.len().max(1) as f64;
    Some((CorridorSpec { lights, distances, speed }, movements))
}

/// Start of the first green for link `link` within the cycle.
fn green_start(tl: &TrafficLight, link: usize) -> Option<f64> {
    tl.phases
        .iter()
        .position(|p| matches!(p.state.as_bytes().get(link), Some(b'G' | b'g')))
        .map(|i| tl.phase_start(i))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetReport {
    pub corridors: Vec<CorridorSpec>,
    /// Final offset of each light that was coordinated.
    pub offsets: BTreeMap<String, f64>,
}

/// Green-wave offsets along the three busiest corridors. Each corridor's
/// through-movement green at light `j` starts `d_j / v` after the first
/// light's. A light shared by several corridors keeps the assignment from the
/// busiest one, and later corridors are anchored to it.
pub fn coordinate_offsets(
    net: &RoadNetwork,
    demand: &DemandSet,
) -> Result<(RoadNetwork, OffsetReport), SignalError> {
    if net.traffic_lights.len() < 2 {
        return Err(SignalError::NoSignals);
    }
    let corridors = top_corridors(net, demand, 3);
    let mut out = net.clone();
    // light id -> time at which the corridor's green should start, mod cycle
    let mut assigned: BTreeMap<String, f64> = BTreeMap::new();
    let mut specs = Vec::new();
    for cor in &corridors {
        let spec = &cor.spec;
        let cycles: Vec<f64> = spec.lights.iter().map(|l| net.traffic_lights[l].cycle()).collect();
        let mut greens = Vec::with_capacity(spec.lights.len());
        for (light, (from, to)) in spec.lights.iter().zip(&cor.movements) {
            let link = net
                .connection(from, to)
                .and_then(|c| c.link_index)
                .ok_or_else(|| SignalError::UnknownLight(light.clone()))?;
            greens.push(green_start(&net.traffic_lights[light], link));
        }
        let zero = spec.offsets(&cycles, 0.0)?;
        // anchor on the first light this corridor shares with a busier one
        let base = spec
            .lights
            .iter()
            .zip(&zero)
            .find_map(|(l, z)| assigned.get(l).map(|a| a - z))
            .unwrap_or(0.0);
        let arrivals = spec.offsets(&cycles, base)?;
        for ((light, arrival), green) in spec.lights.iter().zip(arrivals).zip(greens) {
            let Some(green) = green else { continue };
            if assigned.contains_key(light) {
                continue;
            }
            assigned.insert(light.clone(), arrival);
            let tl = out.traffic_lights.get_mut(light).expect("light exists");
            // the through green starts `green` after phase 0, phase 0 at the offset
            tl.offset = wrap(arrival - green, tl.cycle());
        }
        specs.push(spec.clone());
    }
    let offsets = assigned
        .keys()
        .map(|l| (l.clone(), out.traffic_lights[l].offset))
        .collect();
    Ok((out, OffsetReport { corridors: specs, offsets }))
}

// ---------------------------------------------------------------------------
// Additional files

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TlsFileKind {
    Offsets,
    Programs,
}

pub fn emit_tls_add_xml(net: &RoadNetwork, kind: TlsFileKind) -> Vec<u8> {
    let mut w = XmlWriter::new();
    w.open("additional", &[]);
    for tl in net.traffic_lights.values() {
        let attrs = [
            ("id", tl.id.clone()),
            ("type", "static".to_string()),
            ("programID", tl.program_id.clone()),
            ("offset", num(tl.offset)),
        ];
        match kind {
            TlsFileKind::Offsets => w.empty("tlLogic", &attrs),
            TlsFileKind::Programs => {
                w.open("tlLogic", &attrs);
                for p in &tl.phases {
                    w.empty("phase", &[("duration", num(p.duration)), ("state", p.state.clone())]);
                }
                w.close();
            }
        }
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlsEntry {
    pub id: String,
    pub program_id: String,
    pub offset: f64,
    /// Absent in offsets-only files.
    pub phases: Option<Vec<Phase>>,
}

pub fn parse_tls_add_xml(bytes: &[u8]) -> Result<Vec<TlsEntry>, SignalError> {
    let root = xml::parse_document(bytes).map_err(SignalError::Parse)?;
    if root.name != "additional" {
        return Err(SignalError::Parse(format!("root is <{}>", root.name)));
    }
    root.children_named("tlLogic")
        .map(|t| {
            let phases: Vec<Phase> = t
                .children_named("phase")
                .map(|p| {
                    Ok(Phase::new(
                        p.parse_attr("duration").map_err(SignalError::Parse)?,
                        p.req("state").map_err(SignalError::Parse)?,
                    ))
                })
                .collect::<Result<_, SignalError>>()?;
            Ok(TlsEntry {
                id: t.req("id").map_err(SignalError::Parse)?.to_string(),
                program_id: t.attr("programID").unwrap_or("0").to_string(),
                offset: t
                    .attr("offset")
                    .map_or(Ok(0.0), |_| t.parse_attr("offset"))
                    .map_err(SignalError::Parse)?,
                phases: (!phases.is_empty()).then_some(phases),
            })
        })
        .collect()
}

/// Overlays parsed additional-file entries onto `net`.
pub fn apply_tls_entries(net: &RoadNetwork, entries: &[TlsEntry]) -> Result<RoadNetwork, SignalError> {
    let mut out = net.clone();
    for e in entries {
        let tl = out
            .traffic_lights
            .get_mut(&e.id)
            .ok_or_else(|| SignalError::UnknownLight(e.id.clone()))?;
        tl.program_id = e.program_id.clone();
        tl.offset = e.offset;
        if let Some(phases) = &e.phases {
            tl.phases = phases.clone();
        }
        tl.validate().map_err(|err| SignalError::Parse(err.to_string()))?;
    }
    Ok(out)
}
