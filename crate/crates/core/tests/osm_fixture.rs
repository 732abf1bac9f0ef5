//! The committed Albany extract against counts taken once by
//! `fixtures/tools/count_fixture.py`, an independent reading of the same
//! conversion rules.

use roadchat_core::geodata::parse_osm_xml;
use roadchat_core::netmodel::{convert_osm, emit_net_xml, parse_net_xml};

const ALBANY: &[u8] = include_bytes!("../fixtures/albany.osm");

const NODES: usize = 32;
const EDGES: usize = 93;
const TRAFFIC_LIGHTS: usize = 11;
const STREET_EDGES: [(&str, usize); 5] = [
    ("Madison Avenue", 8),
    ("Washington Avenue", 8),
    ("Lark Street", 10),
    ("Orange Street", 8),
    ("Dove Street", 5),
];

#[test]
fn albany_converts_to_pinned_counts() {
    let net = convert_osm(&parse_osm_xml(ALBANY).unwrap()).unwrap();
    assert_eq!(net.nodes.len(), NODES);
    assert_eq!(net.edges.len(), EDGES);
    assert_eq!(net.traffic_lights.len(), TRAFFIC_LIGHTS);
    for (street, n) in STREET_EDGES {
        assert_eq!(net.find_edges_by_name(street).unwrap().len(), n, "{street}");
    }
    assert!(net.is_weakly_connected());
    net.validate().unwrap();
}

#[test]
fn albany_net_xml_round_trips_byte_stable() {
    let net = convert_osm(&parse_osm_xml(ALBANY).unwrap()).unwrap();
    let first = emit_net_xml(&net);
    let back = parse_net_xml(&first).unwrap();
    assert_eq!(back, net);
    assert_eq!(emit_net_xml(&back), first);
}
