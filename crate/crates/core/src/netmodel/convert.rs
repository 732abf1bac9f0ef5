//! OSM document to road network.

use std::collections::{BTreeMap, BTreeSet};

use super::{EdgeSpec, NetError, NetworkBuilder, Projection, RoadNetwork};
use crate::geodata::{GeoPoint, OsmDocument, OsmWay, SUPPORTED_HIGHWAYS};

const MPH: f64 = 0.44704;
const KMH: f64 = 1.0 / 3.6;

/// Per-class defaults used when a way carries no `lanes`/`maxspeed` tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighwayClass {
    pub speed: f64,
    pub lanes: u32,
    pub priority: i32,
}

impl HighwayClass {
    pub fn of(highway: &str) -> Option<HighwayClass> {
        let (base, link) = match highway.strip_suffix("_link") {
            Some(base) => (base, true),
            None => (highway, false),
        };
        let (speed, lanes, priority) = match base {
            "motorway" => (27.8, 2, 13),
            "trunk" => (22.2, 2, 12),
            "primary" => (13.9, 2, 11),
            "secondary" => (13.9, 1, 10),
            "tertiary" => (12.5, 1, 9),
            "unclassified" => (8.3, 1, 5),
            "residential" => (8.3, 1, 4),
            "living_street" => (2.8, 1, 3),
            "service" => (5.6, 1, 2),
            _ => return None,
        };
        if link && matches!(base, "unclassified" | "residential" | "living_street" | "service") {
            return None;
        }
        Some(if link {
            HighwayClass {
                speed,
                lanes: 1,
                priority: priority - 1,
            }
        } else {
            HighwayClass {
                speed,
                lanes,
                priority,
            }
        })
    }
}

fn parse_maxspeed(raw: &str) -> Option<f64> {
    let s = raw.trim().to_lowercase();
    let (num, factor) = if let Some(v) = s.strip_suffix("mph") {
        (v, MPH)
    } else if let Some(v) = s
        .strip_suffix("km/h")
        .or_else(|| s.strip_suffix("kmh"))
        .or_else(|| s.strip_suffix("kph"))
    {
        (v, KMH)
    } else {
        (s.as_str(), KMH)
    };
    let v: f64 = num.trim().parse().ok()?;
    (v > 0.0).then_some(v * factor)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Direction {
    Both,
    Forward,
    Backward,
}

fn direction(way: &OsmWay) -> Direction {
    match way.tags.get("oneway").map(String::as_str) {
        Some("yes" | "true" | "1") => Direction::Forward,
        Some("-1" | "reverse") => Direction::Backward,
        Some("no" | "false" | "0") => Direction::Both,
        _ => {
            let hw = way.highway().unwrap_or("");
            let roundabout = way.tags.get("junction").is_some_and(|j| j == "roundabout");
            if hw == "motorway" || hw == "motorway_link" || roundabout {
                Direction::Forward
            } else {
                Direction::Both
            }
        }
    }
}

fn tag_u32(way: &OsmWay, key: &str) -> Option<u32> {
    way.tags.get(key)?.trim().parse().ok().filter(|v| *v > 0)
}

/// Lanes per direction as (forward, backward).
fn lanes(way: &OsmWay, class: HighwayClass, dir: Direction) -> (u32, u32) {
    let total = tag_u32(way, "lanes");
    let (fwd, bwd) = match (dir, total) {
        (Direction::Both, Some(t)) => {
            let b = (t / 2).max(1);
            ((t - t / 2).max(1), b)
        }
        (_, Some(t)) => (t, t),
        (_, None) => (class.lanes, class.lanes),
    };
    (
        tag_u32(way, "lanes:forward").unwrap_or(fwd),
        tag_u32(way, "lanes:backward").unwrap_or(bwd),
    )
}

fn is_signal(doc: &OsmDocument, node: i64) -> bool {
    doc.nodes
        .get(&node)
        .and_then(|n| n.tags.get("highway"))
        .is_some_and(|h| h == "traffic_signals")
}

/// Converts with the projection centred on the extent of the used nodes.
pub fn convert_osm(doc: &OsmDocument) -> Result<RoadNetwork, NetError> {
    let used: Vec<GeoPoint> = doc
        .ways
        .values()
        .flat_map(|w| w.nodes.iter())
        .filter_map(|id| doc.nodes.get(id).map(|n| n.point))
        .collect();
    if used.is_empty() {
        return Err(NetError::EmptyNetwork);
    }
    let fold = |f: fn(f64, f64) -> f64, get: fn(&GeoPoint) -> f64, init: f64| {
        used.iter().map(get).fold(init, f)
    };
    let origin = GeoPoint {
        lat: (fold(f64::min, |p| p.lat, f64::INFINITY) + fold(f64::max, |p| p.lat, f64::NEG_INFINITY))
            / 2.0,
        lon: (fold(f64::min, |p| p.lon, f64::INFINITY) + fold(f64::max, |p| p.lon, f64::NEG_INFINITY))
            / 2.0,
    };
    convert_osm_with_origin(doc, origin)
}

/// Splits ways at shared and signalized nodes into directed edges, keeps the
/// largest weakly connected component, and signalizes `traffic_signals` nodes.
pub fn convert_osm_with_origin(doc: &OsmDocument, origin: GeoPoint) -> Result<RoadNetwork, NetError> {
    let projection = Projection { origin };
    let ways: Vec<(i64, &OsmWay, HighwayClass, Vec<i64>)> = doc
        .ways
        .iter()
        .filter_map(|(id, w)| {
            let hw = w.highway()?;
            if !SUPPORTED_HIGHWAYS.contains(&hw) {
                return None;
            }
            let class = HighwayClass::of(hw)?;
            let mut refs: Vec<i64> = w
                .nodes
                .iter()
                .copied()
                .filter(|n| doc.nodes.contains_key(n))
                .collect();
            refs.dedup();
            (refs.len() >= 2).then_some((*id, w, class, refs))
        })
        .collect();
    if ways.is_empty() {
        return Err(NetError::EmptyNetwork);
    }

    let mut use_count: BTreeMap<i64, usize> = BTreeMap::new();
    for (_, _, _, refs) in &ways {
        for n in refs {
            *use_count.entry(*n).or_default() += 1;
        }
    }

    let mut builder = NetworkBuilder::new().projection(projection);
    let mut endpoints = BTreeSet::new();
    let mut specs = Vec::new();
    for (way_id, way, class, refs) in &ways {
        let mut cuts = vec![0];
        for i in 1..refs.len() - 1 {
            if use_count[&refs[i]] > 1 || is_signal(doc, refs[i]) {
                cuts.push(i);
            }
        }
        cuts.push(refs.len() - 1);
        // a closed way needs an interior cut so no edge starts and ends at one node
        let mut segments: Vec<&[i64]> = Vec::new();
        for w in cuts.windows(2) {
            let seg = &refs[w[0]..=w[1]];
            if seg.first() == seg.last() {
                if seg.len() < 3 {
                    continue;
                }
                let mid = seg.len() / 2;
                segments.push(&seg[..=mid]);
                segments.push(&seg[mid..]);
            } else {
                segments.push(seg);
            }
        }

        let dir = direction(way);
        let (fwd_lanes, bwd_lanes) = lanes(way, *class, dir);
        let speed = way
            .tags
            .get("maxspeed")
            .and_then(|s| parse_maxspeed(s))
            .unwrap_or(class.speed);
        let name = way.tags.get("name").cloned().unwrap_or_default();
        for (k, seg) in segments.iter().enumerate() {
            let xy: Vec<[f64; 2]> = seg
                .iter()
                .map(|n| projection.project(doc.nodes[n].point))
                .collect();
            let (a, b) = (seg[0], seg[seg.len() - 1]);
            endpoints.insert(a);
            endpoints.insert(b);
            let via = xy[1..xy.len() - 1].to_vec();
            if dir != Direction::Backward {
                specs.push(
                    EdgeSpec::new(format!("{way_id}#{k}"), a.to_string(), b.to_string())
                        .name(name.clone())
                        .speed(speed)
                        .priority(class.priority)
                        .lanes(fwd_lanes)
                        .via(via.clone()),
                );
            }
            if dir != Direction::Forward {
                let mut rev = via.clone();
                rev.reverse();
                specs.push(
                    EdgeSpec::new(format!("-{way_id}#{k}"), b.to_string(), a.to_string())
                        .name(name.clone())
                        .speed(speed)
                        .priority(class.priority)
                        .lanes(bwd_lanes)
                        .via(rev),
                );
            }
        }
    }
    for n in &endpoints {
        let [x, y] = projection.project(doc.nodes[n].point);
        builder.add_node(n.to_string(), x, y);
    }
    // keep only the largest weakly connected component
    let mut adj: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for s in &specs {
        adj.entry(s.from.clone()).or_default().push(s.to.clone());
        adj.entry(s.to.clone()).or_default().push(s.from.clone());
    }
    let keep = largest_component(&adj);
    let mut dropped = 0;
    for s in specs {
        if keep.contains(&s.from) {
            builder.add_edge(s)?;
        } else {
            dropped += 1;
        }
    }
    for n in &endpoints {
        if keep.contains(&n.to_string()) && is_signal(doc, *n) {
            builder.signalize(n.to_string());
        }
    }
    let mut net = builder.build()?;
    if dropped > 0 {
        net.warnings.push(format!(
            "dropped {dropped} edge(s) outside the largest connected component"
        ));
    }
    Ok(net)
}

fn largest_component(adj: &BTreeMap<String, Vec<String>>) -> BTreeSet<String> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut best: BTreeSet<String> = BTreeSet::new();
    for start in adj.keys() {
        if seen.contains(start.as_str()) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![start.as_str()];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            comp.insert(n.to_string());
            stack.extend(adj[n].iter().map(String::as_str));
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}
