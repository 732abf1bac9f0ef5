//! Scenario construction, edits, and one simulate-and-measure pass.

use std::path::PathBuf;

use roadchat_core::analysis::{compute_metrics, MetricsReport};
use roadchat_core::demand::{
    add_vehicle, emit_rou_xml, parse_rou_xml, random_trips, reroute_invalidated, set_vehicle_mix,
    DemandError, DemandSet, MixSpec,
};
use roadchat_core::geodata::{bbox_around, fetch_osm, GeoError, Geocoder, OsmSource, OVERPASS_URL_ENV};
use roadchat_core::intent::{GridParams, Intent, IntentKind, NetworkKind, SpiderParams, TrafficCondition};
use roadchat_core::netmodel::{
    convert_osm_with_origin, emit_net_xml, generate_grid, generate_spider, parse_net_xml, NetError,
};
use roadchat_core::signal::{
    adapt_all, apply_tls_entries, coordinate_offsets, emit_tls_add_xml, parse_tls_add_xml, SignalError,
    TlsFileKind, WebsterParams,
};
use roadchat_core::simengine::{run, SimConfig, SimError, SimOutput};
use roadchat_core::RoadNetwork;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds of generated demand.
pub const DEMAND_DURATION: f64 = 3600.0;
/// Extra simulated time after the last departure so queued trips can finish.
pub const DRAIN_TIME: f64 = 900.0;
pub const DEFAULT_SEED: u64 = 42;

pub const NET_FILE: &str = "net.xml";
pub const ROU_FILE: &str = "rou.xml";
pub const ADD_FILE: &str = "tls.add.xml";
pub const CFG_FILE: &str = "run.sumocfg";
pub const EDGEDATA_FILE: &str = "edgedata.xml";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no OpenStreetMap source: pass a fixture directory or set {OVERPASS_URL_ENV}")]
    NoOsmSource,
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSource {
    RealWorld { city: String, radius_m: f64 },
    Grid(GridParams),
    Spider(SpiderParams),
}

impl NetworkSource {
    pub fn describe(&self) -> String {
        match self {
            NetworkSource::RealWorld { city, radius_m } => {
                format!("{city} within {:.0} m", radius_m)
            }
            NetworkSource::Grid(g) => format!("{}×{} grid, {} m blocks", g.rows, g.cols, g.spacing_m),
            NetworkSource::Spider(s) => {
                format!("spider network, {} arms, {} circles, {} m apart", s.arms, s.circles, s.spacing_m)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalState {
    pub offsets: bool,
    pub adapted: bool,
}

impl SignalState {
    /// Program id carried by every light in this state.
    pub fn program_id(&self) -> &'static str {
        match (self.adapted, self.offsets) {
            (false, false) => "default",
            (false, true) => "coordinated",
            (true, false) => "adapted",
            (true, true) => "adapted_coordinated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInputs {
    pub network: NetworkSource,
    pub volume_per_hour: f64,
    pub duration: f64,
    pub seed: u64,
    pub ev_proportion: f64,
    pub signals: SignalState,
    /// Edits applied since generation, oldest first.
    pub edits: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub inputs: ScenarioInputs,
    pub net: RoadNetwork,
    pub demand: DemandSet,
}

/// A change to the current scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "edit", rename_all = "snake_case")]
pub enum Edit {
    RemoveEdges { name: String, edges: Vec<String> },
    RemoveLane { name: String, edges: Vec<String>, lane: usize },
    AddVehicle { origin: String, dest: String },
    VehicleMix { ev_proportion: f64 },
    Offsets,
    Adaptation,
}

impl Edit {
    pub fn label(&self) -> String {
        match self {
            Edit::RemoveEdges { name, edges } if edges.len() == 1 && name != &edges[0] => {
                format!("removed {name} ({})", edges[0])
            }
            Edit::RemoveEdges { name, .. } => format!("removed {name}"),
            Edit::RemoveLane { name, lane, .. } => format!("removed lane {lane} of {name}"),
            Edit::AddVehicle { origin, dest } => format!("added a vehicle from {origin} to {dest}"),
            Edit::VehicleMix { ev_proportion } => format!("electric share {ev_proportion}"),
            Edit::Offsets => "traffic light offsets".into(),
            Edit::Adaptation => "traffic light adaptation".into(),
        }
    }
}

/// The bundle files that describe a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFiles {
    pub net: Vec<u8>,
    pub rou: Vec<u8>,
    /// Absent when the network has no traffic lights.
    pub add: Option<Vec<u8>>,
    pub sumocfg: Vec<u8>,
}

impl Scenario {
    pub fn end_time(&self) -> f64 {
        self.inputs.duration + DRAIN_TIME
    }

    fn with_program_ids(mut self) -> Self {
        let pid = self.inputs.signals.program_id();
        for tl in self.net.traffic_lights.values_mut() {
            tl.program_id = pid.to_string();
        }
        self
    }

    /// Applies `edit`, returning the new scenario and a one-line note.
    pub fn apply(&self, edit: &Edit) -> Result<(Scenario, String), EngineError> {
        let mut inputs = self.inputs.clone();
        let (net, demand, note) = match edit {
            Edit::RemoveEdges { edges, .. } => {
                let net = self.net.remove_edges(edges)?;
                let demand = reroute_invalidated(&net, &self.demand);
                let mut note = format!("Removed {} edge(s).", edges.len());
                if demand.dropped > self.demand.dropped {
                    note.push_str(&format!(
                        " {} trip(s) had no remaining route and were dropped.",
                        demand.dropped - self.demand.dropped
                    ));
                }
                (net, demand, note)
            }
            Edit::RemoveLane { edges, lane, .. } => {
                let mut net = self.net.clone();
                for e in edges {
                    net = net.remove_lane(e, *lane)?;
                }
                let note = format!("Removed lane {lane} on {} edge(s).", edges.len());
                (net, self.demand.clone(), note)
            }
            Edit::AddVehicle { origin, dest } => {
                let demand = add_vehicle(&self.net, &self.demand, origin, dest, 0.0)?;
                let trip = demand.trips.iter().find(|t| !self.demand.trips.contains(t)).expect("one trip added");
                let note = format!("Added vehicle {} over {} edges.", trip.id, trip.route.len());
                (self.net.clone(), demand, note)
            }
            Edit::VehicleMix { ev_proportion } => {
                let demand = set_vehicle_mix(&self.demand, MixSpec::new(*ev_proportion)?, inputs.seed);
                inputs.ev_proportion = *ev_proportion;
                let note = format!(
                    "{} of {} vehicles are now electric.",
                    demand.count_of(roadchat_core::demand::Propulsion::Electric),
                    demand.trips.len()
                );
                (self.net.clone(), demand, note)
            }
            Edit::Offsets => {
                let (net, report) = coordinate_offsets(&self.net, &self.demand)?;
                inputs.signals.offsets = true;
                let note = format!(
                    "Coordinated {} traffic lights along {} corridor(s).",
                    report.offsets.len(),
                    report.corridors.len()
                );
                (net, self.demand.clone(), note)
            }
            Edit::Adaptation => {
                if self.net.traffic_lights.is_empty() {
                    return Err(SignalError::NoSignals.into());
                }
                let (net, report) = adapt_all(&self.net, &self.demand, WebsterParams::default());
                if report.adapted.is_empty() {
                    return Err(EngineError::Unsupported(format!(
                        "no traffic light could be retimed ({})",
                        report.skipped.first().map_or("no feasible input", |s| s.1.as_str())
                    )));
                }
                inputs.signals.adapted = true;
                let mut note = format!("Retimed {} traffic lights.", report.adapted.len());
                if !report.skipped.is_empty() {
                    note.push_str(&format!(" {} kept their program.", report.skipped.len()));
                }
                (net, self.demand.clone(), note)
            }
        };
        inputs.edits.push(edit.label());
        let next = Scenario { inputs, net, demand }.with_program_ids();
        Ok((next, note))
    }

    /// The bundle: lights appear in the net with program id "0" and again in
    /// the additional file under the state's program id, which stock SUMO
    /// activates because it loads last.
    pub fn files(&self) -> ScenarioFiles {
        let mut plain = self.net.clone();
        for tl in plain.traffic_lights.values_mut() {
            tl.program_id = "0".into();
        }
        let add = (!self.net.traffic_lights.is_empty()).then(|| emit_tls_add_xml(&self.net, TlsFileKind::Programs));
        ScenarioFiles {
            net: emit_net_xml(&plain),
            rou: emit_rou_xml(&self.demand),
            sumocfg: sumocfg(add.is_some(), self.end_time()),
            add,
        }
    }

    /// Reads a bundle back. The inverse of [`Scenario::files`].
    pub fn from_files(inputs: ScenarioInputs, files: &ScenarioFiles) -> Result<Scenario, EngineError> {
        let mut net = parse_net_xml(&files.net)?;
        if let Some(add) = &files.add {
            net = apply_tls_entries(&net, &parse_tls_add_xml(add)?)?;
        }
        let demand = parse_rou_xml(&files.rou, inputs.duration)?;
        Ok(Scenario { inputs, net, demand })
    }
}

fn sumocfg(with_add: bool, end: f64) -> Vec<u8> {
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<configuration>\n    <input>\n");
    s.push_str(&format!("        <net-file value=\"{NET_FILE}\"/>\n"));
    s.push_str(&format!("        <route-files value=\"{ROU_FILE}\"/>\n"));
    if with_add {
        s.push_str(&format!("        <additional-files value=\"{ADD_FILE}\"/>\n"));
    }
    s.push_str("    </input>\n    <time>\n        <begin value=\"0\"/>\n");
    s.push_str(&format!("        <end value=\"{end}\"/>\n"));
    s.push_str("        <step-length value=\"1\"/>\n    </time>\n</configuration>\n");
    s.into_bytes()
}

/// File names a sumocfg refers to, in input order.
pub fn sumocfg_inputs(cfg: &[u8]) -> Vec<String> {
    let text = String::from_utf8_lossy(cfg);
    ["net-file", "route-files", "additional-files"]
        .iter()
        .filter_map(|tag| {
            let start = text.find(&format!("<{tag} value=\""))? + tag.len() + 9;
            let len = text[start..].find('"')?;
            Some(text[start..start + len].to_string())
        })
        .collect()
}

pub struct EngineConfig {
    /// Directory of `<city>.osm` extracts used instead of a live download.
    pub fixture_dir: Option<PathBuf>,
    pub overpass_url: Option<String>,
    pub seed: u64,
    pub duration: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            fixture_dir: None,
            overpass_url: std::env::var(OVERPASS_URL_ENV).ok(),
            seed: DEFAULT_SEED,
            duration: DEMAND_DURATION,
        }
    }
}

pub struct Engine {
    pub config: EngineConfig,
    geocoder: Geocoder,
}

fn fixture_name(city: &str) -> String {
    let slug: String = city
        .split(',')
        .next()
        .unwrap_or(city)
        .trim()
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{slug}.osm")
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        Engine {
            config,
            geocoder: Geocoder::from_env(),
        }
    }

    pub fn build_network(&self, source: &NetworkSource) -> Result<RoadNetwork, EngineError> {
        Ok(match source {
            NetworkSource::Grid(g) => generate_grid(g.rows, g.cols, g.spacing_m)?,
            NetworkSource::Spider(s) => generate_spider(s.arms, s.circles, s.spacing_m)?,
            NetworkSource::RealWorld { city, radius_m } => {
                let center = self.geocoder.geocode(city)?;
                let bbox = bbox_around(center, *radius_m)?;
                let osm_source = match (&self.config.fixture_dir, &self.config.overpass_url) {
                    (Some(dir), _) => OsmSource::Fixture(dir.join(fixture_name(city))),
                    (None, Some(url)) => OsmSource::Remote(url.clone()),
                    (None, None) => return Err(EngineError::NoOsmSource),
                };
                convert_osm_with_origin(&fetch_osm(&osm_source, &bbox)?, center)?
            }
        })
    }

    /// Builds the scenario for a resolved generation intent.
    pub fn generate(&self, intent: &Intent) -> Result<Scenario, EngineError> {
        let s = &intent.slots;
        let network = match (intent.kind, s.network_kind) {
            (IntentKind::GenerateRealWorld, _) => NetworkSource::RealWorld {
                city: s.city.clone().unwrap_or_default(),
                radius_m: s.radius_m.unwrap_or(roadchat_core::intent::METERS_PER_MILE),
            },
            (IntentKind::GenerateAbstract, Some(NetworkKind::Spider)) => {
                NetworkSource::Spider(s.spider_params.unwrap_or_default())
            }
            (IntentKind::GenerateAbstract, _) => NetworkSource::Grid(s.grid_params.unwrap_or_default()),
            (kind, _) => return Err(EngineError::Unsupported(format!("{kind:?} does not generate a network"))),
        };
        let volume = s.traffic_condition.unwrap_or(TrafficCondition::Medium).volume_per_hour();
        let inputs = ScenarioInputs {
            network,
            volume_per_hour: volume,
            duration: self.config.duration,
            seed: self.config.seed,
            ev_proportion: MixSpec::default().ev_proportion,
            signals: SignalState::default(),
            edits: Vec::new(),
        };
        self.scenario(inputs)
    }

    pub fn scenario(&self, inputs: ScenarioInputs) -> Result<Scenario, EngineError> {
        let net = self.build_network(&inputs.network)?;
        let demand = random_trips(
            &net,
            inputs.volume_per_hour,
            inputs.duration,
            inputs.seed,
            MixSpec::new(inputs.ev_proportion)?,
        )?;
        Ok(Scenario { inputs, net, demand }.with_program_ids())
    }

    pub fn simulate(&self, scenario: &Scenario) -> Result<(SimOutput, MetricsReport), EngineError> {
        let cfg = SimConfig {
            seed: scenario.inputs.seed,
            ..SimConfig::new(scenario.end_time())
        };
        let out = run(&scenario.net, &scenario.demand, &cfg)?;
        let metrics = compute_metrics(&out, &scenario.net);
        Ok((out, metrics))
    }
}
