//! Place-name resolution and OpenStreetMap extracts.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::xml::{self, XmlWriter};

/// Meters per degree of latitude (and of longitude at the equator).
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// Environment variable holding a Nominatim-compatible search URL.
pub const GEOCODER_URL_ENV: &str = "ROADCHAT_GEOCODER_URL";
/// Environment variable holding an Overpass-compatible interpreter URL.
pub const OVERPASS_URL_ENV: &str = "ROADCHAT_OVERPASS_URL";

const GAZETTEER: &str = include_str!("../data/gazetteer.tsv");

/// Highway classes a vehicular network can use.
pub const SUPPORTED_HIGHWAYS: [&str; 14] = [
    "motorway",
    "trunk",
    "primary",
    "secondary",
    "tertiary",
    "residential",
    "unclassified",
    "living_street",
    "service",
    "motorway_link",
    "trunk_link",
    "primary_link",
    "secondary_link",
    "tertiary_link",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("unknown place `{0}`")]
    UnknownPlace(String),
    #[error("invalid coordinates: {0}")]
    InvalidCoordinates(String),
    #[error("radius must be positive, got {0} m")]
    NonPositiveRadius(f64),
    #[error("fetching OSM data failed: {0}")]
    FetchFailed(String),
    #[error("malformed OSM XML: {0}")]
    ParseError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::InvalidCoordinates(format!("({lat}, {lon})")));
        }
        Ok(GeoPoint { lat, lon })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl BoundingBox {
    pub fn new(south: f64, west: f64, north: f64, east: f64) -> Result<Self, GeoError> {
        if !(south < north && west < east) {
            return Err(GeoError::InvalidCoordinates(format!(
                "box ({south}, {west}, {north}, {east}) is empty"
            )));
        }
        Ok(BoundingBox {
            south,
            west,
            north,
            east,
        })
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lat: (self.south + self.north) / 2.0,
            lon: (self.west + self.east) / 2.0,
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.south && p.lat <= self.north && p.lon >= self.west && p.lon <= self.east
    }
}

/// Axis-aligned box circumscribing the circle of `radius_m` around `center`.
pub fn bbox_around(center: GeoPoint, radius_m: f64) -> Result<BoundingBox, GeoError> {
    if !(radius_m > 0.0) {
        return Err(GeoError::NonPositiveRadius(radius_m));
    }
    let half_lat = radius_m / METERS_PER_DEGREE;
    let half_lon = radius_m / (METERS_PER_DEGREE * center.lat.to_radians().cos());
    BoundingBox::new(
        center.lat - half_lat,
        center.lon - half_lon,
        center.lat + half_lat,
        center.lon + half_lon,
    )
}

/// Offline place table bundled with the crate.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    entries: BTreeMap<String, GeoPoint>,
}

impl Gazetteer {
    pub fn bundled() -> Self {
        Self::parse(GAZETTEER).expect("bundled gazetteer is well-formed")
    }

    pub fn parse(text: &str) -> Result<Self, GeoError> {
        let mut entries = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [name, lat, lon] = cols[..] else {
                return Err(GeoError::ParseError(format!("gazetteer line `{line}`")));
            };
            let lat = lat.trim().parse().map_err(|_| GeoError::ParseError(line.into()))?;
            let lon = lon.trim().parse().map_err(|_| GeoError::ParseError(line.into()))?;
            entries.insert(normalize_place(name), GeoPoint::new(lat, lon)?);
        }
        Ok(Gazetteer { entries })
    }

    pub fn lookup(&self, name: &str) -> Option<GeoPoint> {
        let key = normalize_place(name);
        self.entries.get(&key).copied().or_else(|| {
            // "Albany, NY" style qualifiers
            let head = key.split(',').next()?.trim().to_string();
            self.entries.get(&head).copied()
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn normalize_place(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Gazetteer lookup with an optional remote fallback and a per-instance cache.
pub struct Geocoder {
    gazetteer: Gazetteer,
    remote_url: Option<String>,
    cache: Mutex<HashMap<String, GeoPoint>>,
}

impl Geocoder {
    pub fn offline() -> Self {
        Geocoder {
            gazetteer: Gazetteer::bundled(),
            remote_url: None,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_remote(mut self, url: Option<String>) -> Self {
        self.remote_url = url;
        self
    }

    pub fn from_env() -> Self {
        Self::offline().with_remote(std::env::var(GEOCODER_URL_ENV).ok())
    }

    pub fn geocode(&self, city: &str) -> Result<GeoPoint, GeoError> {
        let key = normalize_place(city);
        if key.is_empty() {
            return Err(GeoError::UnknownPlace(city.to_string()));
        }
        if let Some(p) = self.cache.lock().unwrap().get(&key) {
            return Ok(*p);
        }
        let found = match self.gazetteer.lookup(city) {
            Some(p) => p,
            None => {
                let url = self
                    .remote_url
                    .as_deref()
                    .ok_or_else(|| GeoError::UnknownPlace(city.to_string()))?;
                remote_geocode(url, city)
                    .map_err(|_| GeoError::UnknownPlace(city.to_string()))?
            }
        };
        self.cache.lock().unwrap().insert(key, found);
        Ok(found)
    }
}

fn http_client() -> Result<reqwest::blocking::Client, String> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(60))
        .user_agent("roadchat/0.1")
        .build()
        .map_err(|e| e.to_string())
}

fn remote_geocode(url: &str, city: &str) -> Result<GeoPoint, String> {
    #[derive(Deserialize)]
    struct Hit {
        lat: String,
        lon: String,
    }
    let hits: Vec<Hit> = http_client()?
        .get(url)
        .query(&[("q", city), ("format", "json"), ("limit", "1")])
        .send()
        .and_then(|r| r.error_for_status())
        .and_then(|r| r.json())
        .map_err(|e| e.to_string())?;
    let hit = hits.first().ok_or("no results")?;
    let lat = hit.lat.parse().map_err(|_| "bad lat")?;
    let lon = hit.lon.parse().map_err(|_| "bad lon")?;
    GeoPoint::new(lat, lon).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsmNode {
    pub point: GeoPoint,
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsmWay {
    pub nodes: Vec<i64>,
    pub tags: BTreeMap<String, String>,
}

impl OsmWay {
    pub fn highway(&self) -> Option<&str> {
        self.tags.get("highway").map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OsmDocument {
    pub nodes: BTreeMap<i64, OsmNode>,
    pub ways: BTreeMap<i64, OsmWay>,
}

impl OsmDocument {
    /// Keeps ways with at least one node inside `bbox`, plus the nodes they use.
    pub fn clip(&self, bbox: &BoundingBox) -> OsmDocument {
        let ways: BTreeMap<i64, OsmWay> = self
            .ways
            .iter()
            .filter(|(_, w)| {
                w.nodes
                    .iter()
                    .any(|id| self.nodes.get(id).is_some_and(|n| bbox.contains(n.point)))
            })
            .map(|(id, w)| (*id, w.clone()))
            .collect();
        let nodes = ways
            .values()
            .flat_map(|w| w.nodes.iter())
            .filter_map(|id| self.nodes.get(id).map(|n| (*id, n.clone())))
            .collect();
        OsmDocument { nodes, ways }
    }
}

/// Where OSM data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum OsmSource {
    /// A local OSM XML file, clipped to the requested box.
    Fixture(PathBuf),
    /// An Overpass interpreter URL.
    Remote(String),
}

pub fn fetch_osm(source: &OsmSource, bbox: &BoundingBox) -> Result<OsmDocument, GeoError> {
    match source {
        OsmSource::Fixture(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| GeoError::FetchFailed(format!("{}: {e}", path.display())))?;
            Ok(parse_osm_xml(&bytes)?.clip(bbox))
        }
        OsmSource::Remote(url) => {
            let query = format!(
                "[out:xml][timeout:120];(way[\"highway\"]({},{},{},{}););(._;>;);out body;",
                bbox.south, bbox.west, bbox.north, bbox.east
            );
            let body = http_client()
                .map_err(GeoError::FetchFailed)?
                .post(url)
                .form(&[("data", query)])
                .send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.bytes())
                .map_err(|e| GeoError::FetchFailed(e.to_string()))?;
            parse_osm_xml(&body)
        }
    }
}

/// Parses OSM XML, keeping only vehicular highway ways.
pub fn parse_osm_xml(bytes: &[u8]) -> Result<OsmDocument, GeoError> {
    let root = xml::parse_document(bytes).map_err(GeoError::ParseError)?;
    if root.name != "osm" {
        return Err(GeoError::ParseError(format!("root element is <{}>", root.name)));
    }
    let mut doc = OsmDocument::default();
    for el in root.children_named("node") {
        let id: i64 = el.parse_attr("id").map_err(GeoError::ParseError)?;
        let lat = el.parse_attr("lat").map_err(GeoError::ParseError)?;
        let lon = el.parse_attr("lon").map_err(GeoError::ParseError)?;
        let point = GeoPoint::new(lat, lon).map_err(|e| GeoError::ParseError(e.to_string()))?;
        doc.nodes.insert(id, OsmNode { point, tags: tags_of(el) });
    }
    for el in root.children_named("way") {
        let id: i64 = el.parse_attr("id").map_err(GeoError::ParseError)?;
        let nodes = el
            .children_named("nd")
            .map(|nd| nd.parse_attr::<i64>("ref"))
            .collect::<Result<Vec<_>, _>>()
            .map_err(GeoError::ParseError)?;
        let way = OsmWay { nodes, tags: tags_of(el) };
        let usable = way
            .highway()
            .is_some_and(|h| SUPPORTED_HIGHWAYS.contains(&h));
        if !usable || way.nodes.len() < 2 {
            continue;
        }
        if let Some(missing) = way.nodes.iter().find(|n| !doc.nodes.contains_key(n)) {
            return Err(GeoError::ParseError(format!(
                "way {id} references missing node {missing}"
            )));
        }
        doc.ways.insert(id, way);
    }
    Ok(doc)
}

fn tags_of(el: &xml::Element) -> BTreeMap<String, String> {
    el.children_named("tag")
        .filter_map(|t| Some((t.attr("k")?.to_string(), t.attr("v")?.to_string())))
        .collect()
}

pub fn emit_osm_xml(doc: &OsmDocument) -> Vec<u8> {
    let mut w = XmlWriter::new();
    w.open("osm", &[("version", "0.6".into()), ("generator", "roadchat".into())]);
    for (id, node) in &doc.nodes {
        let attrs = [
            ("id", id.to_string()),
            ("lat", xml::num(node.point.lat)),
            ("lon", xml::num(node.point.lon)),
        ];
        if node.tags.is_empty() {
            w.empty("node", &attrs);
        } else {
            w.open("node", &attrs);
            for (k, v) in &node.tags {
                w.empty("tag", &[("k", k.clone()), ("v", v.clone())]);
            }
            w.close();
        }
    }
    for (id, way) in &doc.ways {
        w.open("way", &[("id", id.to_string())]);
        for n in &way.nodes {
            w.empty("nd", &[("ref", n.to_string())]);
        }
        for (k, v) in &way.tags {
            w.empty("tag", &[("k", k.clone()), ("v", v.clone())]);
        }
        w.close();
    }
    w.finish()
}
