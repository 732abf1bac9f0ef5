//! SUMO network XML (`.net.xml`) writer and reader.
//!
//! Only the subset this crate produces is read back: edges with their lanes,
//! junctions, static `tlLogic` programs and connections. Internal junction
//! lanes are never written.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{Connection, Edge, NetError, Node, Phase, Projection, RoadNetwork, TrafficLight};
use crate::geodata::GeoPoint;
use crate::xml::{self, num, XmlWriter};

fn shape_attr(shape: &[[f64; 2]]) -> String {
    shape
        .iter()
        .map(|[x, y]| format!("{},{}", num(*x), num(*y)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_shape(raw: &str) -> Result<Vec<[f64; 2]>, String> {
    raw.split_whitespace()
        .map(|pt| {
            let (x, y) = pt.split_once(',').ok_or_else(|| format!("bad point `{pt}`"))?;
            Ok([
                x.parse().map_err(|_| format!("bad x `{x}`"))?,
                y.parse().map_err(|_| format!("bad y `{y}`"))?,
            ])
        })
        .collect()
}

fn proj_string(p: &Option<Projection>) -> String {
    match p {
        Some(p) => format!(
            "+proj=eqc +lat_ts={} +lat_0={} +lon_0={} +ellps=WGS84 +units=m",
            num(p.origin.lat),
            num(p.origin.lat),
            num(p.origin.lon)
        ),
        None => "!".into(),
    }
}

fn parse_proj(raw: &str) -> Option<Projection> {
    let get = |key: &str| -> Option<f64> {
        raw.split_whitespace()
            .find_map(|tok| tok.strip_prefix(key))
            .and_then(|v| v.parse().ok())
    };
    Some(Projection {
        origin: GeoPoint {
            lat: get("+lat_0=")?,
            lon: get("+lon_0=")?,
        },
    })
}

/// Turn direction code for a movement.
fn dir_code(from: &Edge, to: &Edge) -> &'static str {
    if to.to_node == from.from_node {
        return "t";
    }
    let mut d = to.start_heading() - from.end_heading();
    while d > PI {
        d -= 2.0 * PI;
    }
    while d < -PI {
        d += 2.0 * PI;
    }
    if d.abs() < PI / 6.0 {
        "s"
    } else if d > 0.0 {
        "l"
    } else {
        "r"
    }
}

fn lane_id(edge: &str, index: u32) -> String {
    format!("{edge}_{index}")
}

/// Serializes the network. Ordering follows sorted ids, so equal networks
/// produce identical bytes.
pub fn emit_net_xml(net: &RoadNetwork) -> Vec<u8> {
    let mut w = XmlWriter::new();
    w.open(
        "net",
        &[
            ("version", "1.16".into()),
            ("junctionCornerDetail", "0".into()),
            ("limitTurnSpeed", "-1.00".into()),
        ],
    );
    let (mut xmin, mut ymin, mut xmax, mut ymax) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    if let Some(first) = net.nodes.values().next() {
        (xmin, ymin, xmax, ymax) = (first.x, first.y, first.x, first.y);
    }
    for n in net.nodes.values() {
        xmin = xmin.min(n.x);
        ymin = ymin.min(n.y);
        xmax = xmax.max(n.x);
        ymax = ymax.max(n.y);
    }
    w.empty(
        "location",
        &[
            ("netOffset", "0.00,0.00".into()),
            ("convBoundary", format!("{},{},{},{}", num(xmin), num(ymin), num(xmax), num(ymax))),
            ("origBoundary", "0.00,0.00,0.00,0.00".into()),
            ("projParameter", proj_string(&net.projection)),
        ],
    );
    for e in net.edges.values() {
        let mut attrs = vec![
            ("id", e.id.clone()),
            ("from", e.from_node.clone()),
            ("to", e.to_node.clone()),
            ("priority", e.priority.to_string()),
        ];
        if !e.street_name.is_empty() {
            attrs.push(("name", e.street_name.clone()));
        }
        w.open("edge", &attrs);
        for i in 0..e.lane_count {
            w.empty(
                "lane",
                &[
                    ("id", lane_id(&e.id, i)),
                    ("index", i.to_string()),
                    ("speed", num(e.speed_limit)),
                    ("length", num(e.length)),
                    ("shape", shape_attr(&e.shape)),
                ],
            );
        }
        w.close();
    }
    for tl in net.traffic_lights.values() {
        w.open(
            "tlLogic",
            &[
                ("id", tl.id.clone()),
                ("type", "static".into()),
                ("programID", tl.program_id.clone()),
                ("offset", num(tl.offset)),
            ],
        );
        for p in &tl.phases {
            w.empty("phase", &[("duration", num(p.duration)), ("state", p.state.clone())]);
        }
        w.close();
    }
    for n in net.nodes.values() {
        let kind = if net.traffic_lights.contains_key(&n.id) {
            "traffic_light"
        } else if n.is_junction {
            "priority"
        } else {
            "unregulated"
        };
        let inc: Vec<String> = net
            .edges
            .values()
            .filter(|e| e.to_node == n.id)
            .flat_map(|e| (0..e.lane_count).map(|i| lane_id(&e.id, i)))
            .collect();
        w.empty(
            "junction",
            &[
                ("id", n.id.clone()),
                ("type", kind.into()),
                ("x", num(n.x)),
                ("y", num(n.y)),
                ("incLanes", inc.join(" ")),
                ("intLanes", String::new()),
            ],
        );
    }
    for c in &net.connections {
        let (from, to) = (&net.edges[&c.from], &net.edges[&c.to]);
        let lanes = from.lane_count.max(to.lane_count);
        for i in 0..lanes {
            let mut attrs = vec![
                ("from", c.from.clone()),
                ("to", c.to.clone()),
                ("fromLane", i.min(from.lane_count - 1).to_string()),
                ("toLane", i.min(to.lane_count - 1).to_string()),
            ];
            if let (Some(tl), Some(k)) = (&c.tl, c.link_index) {
                attrs.push(("tl", tl.clone()));
                attrs.push(("linkIndex", k.to_string()));
            }
            attrs.push(("dir", dir_code(from, to).into()));
            attrs.push(("state", if c.tl.is_some() { "O" } else { "M" }.into()));
            w.empty("connection", &attrs);
        }
    }
    w.finish()
}

/// Reads a network written by [`emit_net_xml`].
pub fn parse_net_xml(bytes: &[u8]) -> Result<RoadNetwork, NetError> {
    let root = xml::parse_document(bytes).map_err(NetError::Parse)?;
    if root.name != "net" {
        return Err(NetError::Parse(format!("root element is <{}>", root.name)));
    }
    let projection = root
        .child("location")
        .and_then(|l| l.attr("projParameter"))
        .and_then(parse_proj);

    let mut nodes = BTreeMap::new();
    for j in root.children_named("junction") {
        let id = j.req("id").map_err(NetError::Parse)?.to_string();
        if j.attr("type") == Some("internal") {
            continue;
        }
        let kind = j.attr("type").unwrap_or("priority");
        nodes.insert(
            id.clone(),
            Node {
                id,
                x: j.parse_attr("x").map_err(NetError::Parse)?,
                y: j.parse_attr("y").map_err(NetError::Parse)?,
                is_junction: !matches!(kind, "unregulated" | "dead_end"),
            },
        );
    }

    let mut edges = BTreeMap::new();
    for e in root.children_named("edge") {
        if e.attr("function") == Some("internal") {
            continue;
        }
        let id = e.req("id").map_err(NetError::Parse)?.to_string();
        let lanes: Vec<_> = e.children_named("lane").collect();
        let lane0 = lanes
            .first()
            .ok_or_else(|| NetError::Parse(format!("edge {id} has no lanes")))?;
        edges.insert(
            id.clone(),
            Edge {
                from_node: e.req("from").map_err(NetError::Parse)?.to_string(),
                to_node: e.req("to").map_err(NetError::Parse)?.to_string(),
                street_name: e.attr("name").unwrap_or_default().to_string(),
                length: lane0.parse_attr("length").map_err(NetError::Parse)?,
                lane_count: lanes.len() as u32,
                speed_limit: lane0.parse_attr("speed").map_err(NetError::Parse)?,
                priority: e.attr("priority").map_or(Ok(0), |_| e.parse_attr("priority")).map_err(NetError::Parse)?,
                shape: parse_shape(lane0.req("shape").map_err(NetError::Parse)?).map_err(NetError::Parse)?,
                id,
            },
        );
    }

    let mut traffic_lights = BTreeMap::new();
    for t in root.children_named("tlLogic") {
        let id = t.req("id").map_err(NetError::Parse)?.to_string();
        let phases = t
            .children_named("phase")
            .map(|p| {
                Ok(Phase {
                    duration: p.parse_attr("duration")?,
                    state: p.req("state")?.to_string(),
                })
            })
            .collect::<Result<Vec<_>, String>>()
            .map_err(NetError::Parse)?;
        traffic_lights.insert(
            id.clone(),
            TrafficLight {
                id,
                program_id: t.attr("programID").unwrap_or("0").to_string(),
                offset: t.attr("offset").map_or(Ok(0.0), |_| t.parse_attr("offset")).map_err(NetError::Parse)?,
                phases,
            },
        );
    }

    let mut conns: BTreeMap<(String, String), Connection> = BTreeMap::new();
    for c in root.children_named("connection") {
        let from = c.req("from").map_err(NetError::Parse)?.to_string();
        let to = c.req("to").map_err(NetError::Parse)?.to_string();
        if !edges.contains_key(&from) || !edges.contains_key(&to) {
            continue; // internal lanes
        }
        let link_index = match c.attr("linkIndex") {
            Some(_) => Some(c.parse_attr::<usize>("linkIndex").map_err(NetError::Parse)?),
            None => None,
        };
        conns.entry((from.clone(), to.clone())).or_insert(Connection {
            from,
            to,
            tl: c.attr("tl").map(str::to_string),
            link_index,
        });
    }

    let net = RoadNetwork {
        nodes,
        edges,
        connections: conns.into_values().collect(),
        traffic_lights,
        projection,
        removed: BTreeMap::new(),
        warnings: Vec::new(),
    };
    net.validate()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::parse_osm_xml;
    use crate::netmodel::{convert_osm, generate_grid, generate_spider};

    fn albany() -> RoadNetwork {
        convert_osm(&parse_osm_xml(include_bytes!("../../fixtures/albany.osm")).unwrap()).unwrap()
    }

    #[test]
    fn self_round_trip_grid_spider_albany() {
        for net in [
            generate_grid(4, 3, 150.0).unwrap(),
            generate_spider(5, 2, 100.0).unwrap(),
            albany(),
        ] {
            let bytes = emit_net_xml(&net);
            let back = parse_net_xml(&bytes).unwrap();
            assert_eq!(back, net);
            assert_eq!(emit_net_xml(&back), bytes);
        }
    }

    #[test]
    fn round_trip_after_edits() {
        let net = albany();
        let ids: Vec<String> = net
            .find_edges_by_name("Washington Avenue")
            .unwrap()
            .iter()
            .map(|e| e.id.clone())
            .collect();
        let edited = net.remove_edges(&ids).unwrap();
        let back = parse_net_xml(&emit_net_xml(&edited)).unwrap();
        assert_eq!(back, edited);
    }

    #[test]
    fn emission_is_deterministic() {
        assert_eq!(emit_net_xml(&albany()), emit_net_xml(&albany()));
    }

    #[test]
    fn emits_expected_elements() {
        let net = generate_grid(3, 3, 100.0).unwrap();
        let text = String::from_utf8(emit_net_xml(&net)).unwrap();
        assert!(text.contains(r#"<tlLogic id="B1" type="static" programID="0" offset="0.0">"#));
        assert!(text.contains(r#"<phase duration="31.0" state=""#));
        assert!(text.contains(r#"<junction id="B1" type="traffic_light""#));
        assert!(text.contains(r#"<lane id="A0_A1_0" index="0" speed="13.89" length="100.0""#));
        assert!(text.contains(r#"tl="B1" linkIndex="0""#));
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(parse_net_xml(b"<routes/>"), Err(NetError::Parse(_))));
        assert!(parse_net_xml(b"<net><edge id=\"x\"/></net>").is_err());
    }

    #[test]
    fn projection_survives() {
        let net = albany();
        let back = parse_net_xml(&emit_net_xml(&net)).unwrap();
        assert_eq!(back.projection, net.projection);
        assert!(net.projection.is_some());
    }
}
