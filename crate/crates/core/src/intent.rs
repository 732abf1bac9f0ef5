//! Turning chat text into typed intents.
//!
//! Two backends produce an [`Intent`]: a deterministic keyword grammar
//! ([`RulesBackend`]) and an LLM that answers with a flat key-value record
//! ([`LlmBackend`]). Either way the result is slot-validated, and
//! [`check_sufficiency`] decides whether the pipeline can act on it or must
//! ask a clarifying question.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatTransport, LlmError};

pub const METERS_PER_MILE: f64 = 1609.344;

/// Fixed system prompt sent with every turn to the LLM backend.
pub const SYSTEM_PROMPT: &str = "You are taking input and generate keywords for a transportation \
simulation. Analyze the user input and give a python dictionary with these keywords: \
kind (one of generate_real_world, generate_abstract, edge_remove, lane_remove, tls_offset, \
tls_adaptation, add_vehicle, vehicle_mix, compare), city, radius (with unit), \
traffic condition (light, medium or heavy), network kind (grid or spider), rows, cols, arms, \
circles, spacing (meters), edge name, lane index (0-based), origin edge, destination edge, \
ev proportion (0 to 1), compare run ids. Only include keywords the user mentioned. \
Reply with the dictionary only.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntentError {
    #[error("intent backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend reply is not a key-value record: {0}")]
    UnparseableReply(String),
    #[error("a clarification intent has no slots to check")]
    NothingToCheck,
    #[error("the report is already sufficient")]
    NothingMissing,
}

impl From<LlmError> for IntentError {
    fn from(e: LlmError) -> Self {
        IntentError::BackendUnavailable(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTurn {
    pub session_id: String,
    pub text: String,
    pub turn_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentKind {
    GenerateRealWorld,
    GenerateAbstract,
    EdgeRemove,
    LaneRemove,
    TlsOffset,
    TlsAdaptation,
    AddVehicle,
    VehicleMix,
    Compare,
    Clarify,
}

impl IntentKind {
    pub fn is_generation(self) -> bool {
        matches!(self, IntentKind::GenerateRealWorld | IntentKind::GenerateAbstract)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficCondition {
    Light,
    Medium,
    Heavy,
}

impl TrafficCondition {
    /// Demand in vehicles per hour.
    pub fn volume_per_hour(self) -> f64 {
        match self {
            TrafficCondition::Light => 1000.0,
            TrafficCondition::Medium => 2000.0,
            TrafficCondition::Heavy => 3000.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficCondition::Light => "light",
            TrafficCondition::Medium => "medium",
            TrafficCondition::Heavy => "heavy",
        }
    }

    fn parse(word: &str) -> Option<Self> {
        match word.trim().to_lowercase().as_str() {
            "light" | "low" => Some(TrafficCondition::Light),
            "medium" | "moderate" | "normal" => Some(TrafficCondition::Medium),
            "heavy" | "high" | "dense" => Some(TrafficCondition::Heavy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Grid,
    Spider,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            rows: 5,
            cols: 5,
            spacing_m: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiderParams {
    pub arms: usize,
    pub circles: usize,
    pub spacing_m: f64,
}

impl Default for SpiderParams {
    fn default() -> Self {
        SpiderParams {
            arms: 20,
            circles: 10,
            spacing_m: 150.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotMap {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    /// Meters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traffic_condition: Option<TrafficCondition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network_kind: Option<NetworkKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_params: Option<GridParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spider_params: Option<SpiderParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lane_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin_edge: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dest_edge: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ev_proportion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare_run_ids: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    City,
    Radius,
    TrafficCondition,
    NetworkKind,
    GridParams,
    SpiderParams,
    EdgeName,
    LaneIndex,
    OriginEdge,
    DestEdge,
    EvProportion,
    CompareRunIds,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Slot::City => "city",
            Slot::Radius => "radius",
            Slot::TrafficCondition => "traffic_condition",
            Slot::NetworkKind => "network_kind",
            Slot::GridParams => "grid_params",
            Slot::SpiderParams => "spider_params",
            Slot::EdgeName => "edge_name",
            Slot::LaneIndex => "lane_index",
            Slot::OriginEdge => "origin_edge",
            Slot::DestEdge => "dest_edge",
            Slot::EvProportion => "ev_proportion",
            Slot::CompareRunIds => "compare_run_ids",
        };
        f.write_str(s)
    }
}

impl SlotMap {
    /// Slots whose values break their range invariants.
    pub fn invalid_slots(&self) -> Vec<Slot> {
        let mut bad = Vec::new();
        if self.radius_m.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            bad.push(Slot::Radius);
        }
        if self.ev_proportion.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
            bad.push(Slot::EvProportion);
        }
        if self
            .grid_params
            .is_some_and(|g| g.rows < 2 || g.cols < 2 || !(g.spacing_m > 0.0))
        {
            bad.push(Slot::GridParams);
        }
        if self
            .spider_params
            .is_some_and(|s| s.arms < 3 || s.circles < 1 || !(s.spacing_m > 0.0))
        {
            bad.push(Slot::SpiderParams);
        }
        for (slot, v) in [
            (Slot::City, &self.city),
            (Slot::EdgeName, &self.edge_name),
            (Slot::OriginEdge, &self.origin_edge),
            (Slot::DestEdge, &self.dest_edge),
        ] {
            if v.as_deref().is_some_and(|s| s.trim().is_empty()) {
                bad.push(slot);
            }
        }
        bad
    }

    fn clear(&mut self, slot: Slot) {
        match slot {
            Slot::City => self.city = None,
            Slot::Radius => self.radius_m = None,
            Slot::TrafficCondition => self.traffic_condition = None,
            Slot::NetworkKind => self.network_kind = None,
            Slot::GridParams => self.grid_params = None,
            Slot::SpiderParams => self.spider_params = None,
            Slot::EdgeName => self.edge_name = None,
            Slot::LaneIndex => self.lane_index = None,
            Slot::OriginEdge => self.origin_edge = None,
            Slot::DestEdge => self.dest_edge = None,
            Slot::EvProportion => self.ev_proportion = None,
            Slot::CompareRunIds => self.compare_run_ids = None,
        }
    }

    /// Copies every slot set in `other` over this one.
    fn merge_from(&mut self, other: &SlotMap) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(
            city,
            radius_m,
            traffic_condition,
            network_kind,
            grid_params,
            spider_params,
            edge_name,
            lane_index,
            origin_edge,
            dest_edge,
            ev_proportion,
            compare_run_ids
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub kind: IntentKind,
    pub slots: SlotMap,
}

impl Intent {
    pub fn new(kind: IntentKind) -> Self {
        Intent {
            kind,
            slots: SlotMap::default(),
        }
    }

    pub fn clarify() -> Self {
        Self::new(IntentKind::Clarify)
    }

    pub fn with(kind: IntentKind, slots: SlotMap) -> Self {
        Intent { kind, slots }
    }

    /// Drops slot values that break their invariants so they read as missing.
    pub fn sanitized(mut self) -> Self {
        for slot in self.slots.invalid_slots() {
            self.slots.clear(slot);
        }
        self
    }
}

// ---------------------------------------------------------------------------
// Sufficiency

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyReport {
    pub sufficient: bool,
    pub missing: Vec<Slot>,
    /// The intent with defaults filled in.
    pub resolved: Intent,
}

pub fn required_slots(kind: IntentKind) -> &'static [Slot] {
    match kind {
        IntentKind::GenerateRealWorld => &[Slot::City],
        IntentKind::GenerateAbstract => &[Slot::NetworkKind],
        IntentKind::EdgeRemove => &[Slot::EdgeName],
        IntentKind::LaneRemove => &[Slot::EdgeName, Slot::LaneIndex],
        IntentKind::AddVehicle => &[Slot::OriginEdge, Slot::DestEdge],
        IntentKind::VehicleMix => &[Slot::EvProportion],
        IntentKind::TlsOffset
        | IntentKind::TlsAdaptation
        | IntentKind::Compare
        | IntentKind::Clarify => &[],
    }
}

fn has_slot(s: &SlotMap, slot: Slot) -> bool {
    match slot {
        Slot::City => s.city.is_some(),
        Slot::Radius => s.radius_m.is_some(),
        Slot::TrafficCondition => s.traffic_condition.is_some(),
        Slot::NetworkKind => s.network_kind.is_some(),
        Slot::GridParams => s.grid_params.is_some(),
        Slot::SpiderParams => s.spider_params.is_some(),
        Slot::EdgeName => s.edge_name.is_some(),
        Slot::LaneIndex => s.lane_index.is_some(),
        Slot::OriginEdge => s.origin_edge.is_some(),
        Slot::DestEdge => s.dest_edge.is_some(),
        Slot::EvProportion => s.ev_proportion.is_some(),
        Slot::CompareRunIds => s.compare_run_ids.is_some(),
    }
}

/// Decides whether `intent` carries everything its kind needs, after
/// applying defaults (radius 1 mi, medium traffic, standard grid/spider sizes).
pub fn check_sufficiency(intent: &Intent) -> Result<SufficiencyReport, IntentError> {
    if intent.kind == IntentKind::Clarify {
        return Err(IntentError::NothingToCheck);
    }
    let mut resolved = intent.clone();
    let s = &mut resolved.slots;
    match intent.kind {
        IntentKind::GenerateRealWorld => {
            s.radius_m.get_or_insert(METERS_PER_MILE);
            s.traffic_condition.get_or_insert(TrafficCondition::Medium);
        }
        IntentKind::GenerateAbstract => {
            s.traffic_condition.get_or_insert(TrafficCondition::Medium);
            match s.network_kind {
                Some(NetworkKind::Grid) => {
                    s.grid_params.get_or_insert_with(GridParams::default);
                }
                Some(NetworkKind::Spider) => {
                    s.spider_params.get_or_insert_with(SpiderParams::default);
                }
                None => {}
            }
        }
        _ => {}
    }
    let invalid = resolved.slots.invalid_slots();
    let mut missing: Vec<Slot> = required_slots(intent.kind)
        .iter()
        .copied()
        .filter(|slot| !has_slot(&resolved.slots, *slot))
        .chain(invalid)
        .collect();
    missing.sort();
    missing.dedup();
    Ok(SufficiencyReport {
        sufficient: missing.is_empty(),
        missing,
        resolved,
    })
}

fn question_for(slot: Slot) -> &'static str {
    match slot {
        Slot::City => "Which city should I simulate?",
        Slot::Radius => "What radius should the simulated area have?",
        Slot::TrafficCondition => "Should the traffic be light, medium or heavy?",
        Slot::NetworkKind => "Which network type do you want: grid or spider?",
        Slot::GridParams => "How many rows and columns should the grid have, and how far apart?",
        Slot::SpiderParams => "How many arms and circles should the spider network have?",
        Slot::EdgeName => "Which street should I remove?",
        Slot::LaneIndex => "Which lane should I remove?",
        Slot::OriginEdge => "Which road should the vehicle start from?",
        Slot::DestEdge => "Which road should the vehicle drive to?",
        Slot::EvProportion => "What proportion of the vehicles should be electric, between 0 and 1?",
        Slot::CompareRunIds => "Which runs should I compare?",
    }
}

fn slot_phrase(slot: Slot) -> &'static str {
    match slot {
        Slot::City => "the city",
        Slot::Radius => "the radius",
        Slot::TrafficCondition => "the traffic condition",
        Slot::NetworkKind => "the network type (grid or spider)",
        Slot::GridParams => "the grid size",
        Slot::SpiderParams => "the spider size",
        Slot::EdgeName => "the street name",
        Slot::LaneIndex => "the lane",
        Slot::OriginEdge => "the origin road",
        Slot::DestEdge => "the destination road",
        Slot::EvProportion => "the electric-vehicle proportion (0 to 1)",
        Slot::CompareRunIds => "the runs to compare",
    }
}

/// One-sentence question about the missing slots.
pub fn render_clarification(report: &SufficiencyReport) -> Result<String, IntentError> {
    match report.missing.as_slice() {
        [] => Err(IntentError::NothingMissing),
        [only] => Ok(question_for(*only).to_string()),
        [first @ .., last] => {
            let head: Vec<&str> = first.iter().map(|s| slot_phrase(*s)).collect();
            Ok(format!(
                "Please tell me {} and {}.",
                head.join(", "),
                slot_phrase(*last)
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// Rules backend

macro_rules! re {
    ($name:ident, $pat:expr) => {
        static $name: LazyLock<Regex> = LazyLock::new(|| Regex::new($pat).expect("valid regex"));
    };
}

re!(RADIUS, r"(?i)(\d+(?:\.\d+)?)\s*-?\s*(miles?|mi|kilomet(?:er|re)s?|km|met(?:er|re)s?|m)\b");
re!(HALF_MILE, r"(?i)\bhalf\s+(?:a\s+)?mile\b");
re!(TRAFFIC, r"(?i)\b(light|low|medium|moderate|normal|heavy|high|dense)\b");
re!(GRID_SIZE, r"(?i)\b(\d+)\s*(?:x|by|×)\s*(\d+)\b");
re!(SPACING, r"(?i)(\d+(?:\.\d+)?)\s*(?:m|meters?|metres?)\b");
re!(ARMS, r"(?i)\b(\d+)\s+arms?\b");
re!(CIRCLES, r"(?i)\b(\d+)\s+(?:circles?|rings?)\b");
re!(ROWS, r"(?i)\b(\d+)\s+rows?\b");
re!(COLS, r"(?i)\b(\d+)\s+(?:columns?|cols?)\b");
re!(COMPARE, r"(?i)\bcompar(?:e|ing|ison)\b");
re!(OFFSET, r"(?i)\boffsets?\b|\bgreen[- ]wave\b|\bcoordinat(?:e|ion)\b");
re!(ADAPT, r"(?i)\badapt(?:ation|ive)?\b|\bwebster|\bcycle lengths?\b|\bretim(?:e|ing)\b|\boptimi[sz]e\b.*\b(?:signals?|lights?|phases?)\b|\bgreen (?:phase|time|split)s?\b");
re!(MIX_SUBJECT, r"(?i)\b(?:electric|evs?|e-vehicles?|gasoline|gas|petrol|fuel)\b");
re!(MIX_AMOUNT, r"(?i)\b(?:proportion|percent(?:age)?|share|ratio|fraction|mix|portion)\b|%");
re!(GAS_SUBJECT, r"(?i)\b(?:gasoline|gas|petrol)\b");
re!(ELECTRIC_SUBJECT, r"(?i)\b(?:electric|evs?|e-vehicles?)\b");
re!(NUMBER_PCT, r"(?i)(\d+(?:\.\d+)?|\.\d+)\s*(%|percent\b)?");
re!(REMOVE_VERB, r"(?i)\b(?:remove|delete|close|block|drop|eliminate)\b");
re!(REMOVE_TARGET, r"(?i)\b(?:remove|delete|close|block|drop|eliminate)\s+(?:the\s+)?(?:road\s+|street\s+|edge\s+)?(?:called\s+|named\s+)?(.+?)\s*[.!?]*\s*$");
re!(LANE_ORDINAL, r"(?i)\b(first|second|third|fourth|fifth|\d+(?:st|nd|rd|th))\s+lane\b");
re!(LANE_NUMBER, r"(?i)\blane\s+(?:number\s+|index\s+|#)?(\d+)\b");
re!(LANE_STREET, r"(?i)\blane\s+(?:number\s+|index\s+|#)?(?:\d+\s+)?(?:in|on|of|from)\s+(?:the\s+)?(.+?)\s*[.!?]*\s*$");
re!(VEHICLE_WORD, r"(?i)\b(?:vehicles?|cars?|trips?)\b");
re!(ADD_VERB, r"(?i)\b(?:add|insert|spawn|put|generate|create|send|route)\b");
re!(FROM_TO, r"(?i)\bfrom\s+(?:the\s+)?(?:edge\s+|road\s+)?(.+?)\s+to\s+(?:the\s+)?(?:edge\s+|road\s+)?(.+?)\s*[.!?]*\s*$");
re!(ABSTRACT, r"(?i)\b(grid|spider)\b");
re!(GENERATE, r"(?i)\b(?:generate|simulat(?:e|ion|ions)|create|build|make|show|see|run|set\s+up|model)\b");
re!(RUN_IDS, r"(?i)\b(?:runs?|simulations?|#)\s*(\d+)|\band\s+(?:run\s+)?(\d+)\b|,\s*(\d+)\b");

fn ordinal_word(word: &str) -> Option<usize> {
    let w = word.to_lowercase();
    let n = match w.as_str() {
        "first" => 1,
        "second" => 2,
        "third" => 3,
        "fourth" => 4,
        "fifth" => 5,
        other => other.trim_end_matches(|c: char| c.is_alphabetic()).parse().ok()?,
    };
    (n >= 1).then(|| n - 1)
}

fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// Parses "3 miles", "3mi", "4.5 km", "800 m" to meters.
pub fn parse_length(text: &str) -> Option<f64> {
    if HALF_MILE.is_match(text) {
        return Some(0.5 * METERS_PER_MILE);
    }
    let caps = RADIUS.captures(text)?;
    let value: f64 = caps[1].parse().ok()?;
    let unit = caps[2].to_lowercase();
    let factor = if unit.starts_with("mi") {
        METERS_PER_MILE
    } else if unit.starts_with('k') {
        1000.0
    } else {
        1.0
    };
    Some(value * factor)
}

const CITY_STOPWORDS: &[&str] = &[
    "a", "an", "the", "with", "and", "of", "for", "there", "it", "should", "that", "where", "radius",
    "traffic", "medium", "heavy", "light", "simulation",
];

fn is_capitalized(tok: &str) -> bool {
    tok.chars().next().is_some_and(|c| c.is_uppercase())
}

fn clean_token(tok: &str) -> &str {
    tok.trim_matches(|c: char| !c.is_alphanumeric() && c != '-' && c != '\'')
}

/// City name after "city (of)" or "in"; a capitalized run of words.
fn extract_city(text: &str) -> Option<String> {
    let raw: Vec<&str> = text.split_whitespace().collect();
    let capitalized_run = |start: usize| -> Option<String> {
        let mut words = Vec::new();
        for tok in &raw[start..] {
            let clean = clean_token(tok);
            if clean.is_empty() || !is_capitalized(clean) || clean.chars().all(|c| c.is_ascii_digit()) {
                break;
            }
            words.push(clean);
            // punctuation ends the name
            if tok.ends_with([',', '.', ';', '!', '?']) {
                break;
            }
        }
        (!words.is_empty()).then(|| words.join(" "))
    };
    for (i, tok) in raw.iter().enumerate() {
        if clean_token(tok).eq_ignore_ascii_case("city") {
            let mut j = i + 1;
            if raw.get(j).is_some_and(|t| clean_token(t).eq_ignore_ascii_case("of")) {
                j += 1;
            }
            if j < raw.len() {
                if let Some(name) = capitalized_run(j) {
                    return Some(name);
                }
                let next = clean_token(raw[j]);
                if !next.is_empty() && !CITY_STOPWORDS.contains(&next.to_lowercase().as_str()) {
                    return Some(next.to_string());
                }
            }
        }
    }
    for (i, tok) in raw.iter().enumerate() {
        if clean_token(tok).eq_ignore_ascii_case("in") && i + 1 < raw.len() {
            if let Some(name) = capitalized_run(i + 1) {
                return Some(name);
            }
        }
    }
    None
}

fn extract_traffic(text: &str) -> Option<TrafficCondition> {
    TRAFFIC
        .captures_iter(text)
        .filter(|c| {
            // "traffic light(s)" is about signals, not demand
            let m = c.get(0).expect("match");
            let before = text[..m.start()].to_lowercase();
            !(before.trim_end().ends_with("traffic") && m.as_str().eq_ignore_ascii_case("light"))
        })
        .find_map(|c| TrafficCondition::parse(&c[1]))
}

fn trim_name(name: &str) -> String {
    let mut s = name.trim().trim_end_matches(['.', '!', '?', ',']).trim().to_string();
    for suffix in [
        " from the simulation",
        " from the network",
        " from the map",
        " from the scenario",
        " please",
    ] {
        if s.to_lowercase().ends_with(suffix) {
            s.truncate(s.len() - suffix.len());
        }
    }
    s.trim().to_string()
}

fn extract_spacing(text: &str) -> Option<f64> {
    SPACING.captures(text).and_then(|c| c[1].parse().ok())
}

fn abstract_slots(text: &str, kind: NetworkKind, slots: &mut SlotMap) {
    slots.network_kind = Some(kind);
    let spacing = extract_spacing(text);
    match kind {
        NetworkKind::Grid => {
            let mut g = GridParams::default();
            if let Some(c) = GRID_SIZE.captures(text) {
                g.rows = c[1].parse().unwrap_or(g.rows);
                g.cols = c[2].parse().unwrap_or(g.cols);
            }
            if let Some(c) = ROWS.captures(text) {
                g.rows = c[1].parse().unwrap_or(g.rows);
            }
            if let Some(c) = COLS.captures(text) {
                g.cols = c[1].parse().unwrap_or(g.cols);
            }
            if let Some(s) = spacing {
                g.spacing_m = s;
            }
            slots.grid_params = Some(g);
        }
        NetworkKind::Spider => {
            let mut p = SpiderParams::default();
            if let Some(c) = ARMS.captures(text) {
                p.arms = c[1].parse().unwrap_or(p.arms);
            }
            if let Some(c) = CIRCLES.captures(text) {
                p.circles = c[1].parse().unwrap_or(p.circles);
            }
            if let Some(s) = spacing {
                p.spacing_m = s;
            }
            slots.spider_params = Some(p);
        }
    }
    slots.traffic_condition = extract_traffic(text);
}

fn extract_mix(text: &str) -> Option<f64> {
    let caps = NUMBER_PCT.captures_iter(text).last()?;
    let mut value: f64 = caps[1].parse().ok()?;
    if caps.get(2).is_some() || value > 1.0 {
        value /= 100.0;
    }
    let gas_first = GAS_SUBJECT.find(text).map(|m| m.start());
    let ev_first = ELECTRIC_SUBJECT.find(text).map(|m| m.start());
    let about_gas = match (gas_first, ev_first) {
        (Some(_), None) => true,
        (Some(g), Some(e)) => g < e,
        _ => false,
    };
    Some(if about_gas { 1.0 - value } else { value })
}

fn extract_run_ids(text: &str) -> Option<Vec<u32>> {
    let ids: Vec<u32> = RUN_IDS
        .captures_iter(text)
        .filter_map(|c| {
            c.get(1)
                .or_else(|| c.get(2))
                .or_else(|| c.get(3))
                .and_then(|m| m.as_str().parse().ok())
        })
        .collect();
    (!ids.is_empty()).then_some(ids)
}

/// Deterministic keyword grammar.
#[derive(Debug, Clone, Copy, Default)]
pub struct RulesBackend;

impl RulesBackend {
    /// Interprets one utterance in isolation.
    pub fn parse_text(&self, text: &str) -> Intent {
        let text = text.trim();
        if text.is_empty() {
            return Intent::clarify();
        }
        let mut slots = SlotMap::default();

        if COMPARE.is_match(text) {
            slots.compare_run_ids = extract_run_ids(text);
            return Intent::with(IntentKind::Compare, slots);
        }
        if MIX_SUBJECT.is_match(text) && MIX_AMOUNT.is_match(text) {
            slots.ev_proportion = extract_mix(text);
            return Intent::with(IntentKind::VehicleMix, slots);
        }
        if REMOVE_VERB.is_match(text) {
            if let Some(c) = LANE_ORDINAL.captures(text) {
                slots.lane_index = ordinal_word(&c[1]);
                slots.edge_name = LANE_STREET.captures(text).map(|c| trim_name(&c[1]));
                return Intent::with(IntentKind::LaneRemove, slots);
            }
            if let Some(c) = LANE_NUMBER.captures(text) {
                slots.lane_index = c[1].parse().ok();
                slots.edge_name = LANE_STREET.captures(text).map(|c| trim_name(&c[1]));
                return Intent::with(IntentKind::LaneRemove, slots);
            }
            slots.edge_name = REMOVE_TARGET
                .captures(text)
                .map(|c| trim_name(&c[1]))
                .filter(|n| !n.is_empty() && !n.eq_ignore_ascii_case("a street"));
            return Intent::with(IntentKind::EdgeRemove, slots);
        }
        if OFFSET.is_match(text) {
            return Intent::new(IntentKind::TlsOffset);
        }
        if ADAPT.is_match(text) {
            return Intent::new(IntentKind::TlsAdaptation);
        }
        if VEHICLE_WORD.is_match(text) && ADD_VERB.is_match(text) && !GENERATE_SCENARIO_HINT.is_match(text) {
            if let Some(c) = FROM_TO.captures(text) {
                slots.origin_edge = Some(trim_name(&c[1]));
                slots.dest_edge = Some(trim_name(&c[2]));
            }
            return Intent::with(IntentKind::AddVehicle, slots);
        }
        if let Some(c) = ABSTRACT.captures(text) {
            let kind = if c[1].eq_ignore_ascii_case("grid") {
                NetworkKind::Grid
            } else {
                NetworkKind::Spider
            };
            abstract_slots(text, kind, &mut slots);
            return Intent::with(IntentKind::GenerateAbstract, slots);
        }
        let city = extract_city(text);
        let radius = parse_length(text);
        let traffic = extract_traffic(text);
        if GENERATE.is_match(text) || city.is_some() {
            if GENERATE.is_match(text)
                && city.is_none()
                && radius.is_none()
                && traffic.is_none()
                && !text.to_lowercase().contains("network")
            {
                return Intent::clarify();
            }
            slots.city = city;
            slots.radius_m = radius;
            slots.traffic_condition = traffic;
            let kind = if text.to_lowercase().contains("network") && slots.city.is_none() {
                IntentKind::GenerateAbstract
            } else {
                IntentKind::GenerateRealWorld
            };
            return Intent::with(kind, slots);
        }
        Intent::clarify()
    }

    /// Reads a bare answer to the question asked about `pending`.
    fn answer(&self, pending: &Intent, missing: &[Slot], text: &str) -> Option<Intent> {
        let text = text.trim();
        let mut filled = pending.clone();
        let mut any = false;
        for slot in missing {
            let s = &mut filled.slots;
            match slot {
                Slot::City => {
                    let city = extract_city(text).unwrap_or_else(|| trim_name(text));
                    if !city.is_empty() {
                        s.city = Some(city);
                        any = true;
                    }
                }
                Slot::Radius => {
                    if let Some(r) = parse_length(text) {
                        s.radius_m = Some(r);
                        any = true;
                    }
                }
                Slot::NetworkKind => {
                    if let Some(c) = ABSTRACT.captures(text) {
                        let kind = if c[1].eq_ignore_ascii_case("grid") {
                            NetworkKind::Grid
                        } else {
                            NetworkKind::Spider
                        };
                        let keep_traffic = s.traffic_condition;
                        abstract_slots(text, kind, s);
                        s.traffic_condition = s.traffic_condition.or(keep_traffic);
                        any = true;
                    }
                }
                Slot::EdgeName => {
                    let name = trim_name(text);
                    if !name.is_empty() {
                        s.edge_name = Some(name);
                        any = true;
                    }
                }
                Slot::LaneIndex => {
                    let idx = LANE_ORDINAL
                        .captures(text)
                        .and_then(|c| ordinal_word(&c[1]))
                        .or_else(|| ordinal_word(text.split_whitespace().next()?))
                        .or_else(|| LANE_NUMBER.captures(text).and_then(|c| c[1].parse().ok()));
                    if idx.is_some() {
                        s.lane_index = idx;
                        any = true;
                    }
                }
                Slot::OriginEdge | Slot::DestEdge => {
                    if let Some(c) = FROM_TO.captures(text) {
                        s.origin_edge = Some(trim_name(&c[1]));
                        s.dest_edge = Some(trim_name(&c[2]));
                        any = true;
                    }
                }
                Slot::EvProportion => {
                    if let Some(p) = extract_mix(text) {
                        s.ev_proportion = Some(p);
                        any = true;
                    }
                }
                _ => {}
            }
        }
        any.then_some(filled)
    }
}

re!(GENERATE_SCENARIO_HINT, r"(?i)\b(?:city|radius|grid|spider|network|traffic should|vehicles per hour)\b");

// ---------------------------------------------------------------------------
// LLM backend: key-value record parsing

fn normalize_key(k: &str) -> String {
    k.trim()
        .trim_matches(|c| c == '"' || c == '\'')
        .trim()
        .to_lowercase()
        .replace([' ', '-'], "_")
}

fn unquote(v: &str) -> String {
    v.trim().trim_matches(|c| c == '"' || c == '\'').trim().to_string()
}

/// Splits on commas outside quotes and brackets.
fn split_top_level(body: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut cur = String::new();
    for ch in body.chars() {
        match (quote, ch) {
            (Some(q), c) if c == q => {
                quote = None;
                cur.push(c);
            }
            (Some(_), c) => cur.push(c),
            (None, '"' | '\'') => {
                quote = Some(ch);
                cur.push(ch);
            }
            (None, '[' | '(' | '{') => {
                depth += 1;
                cur.push(ch);
            }
            (None, ']' | ')' | '}') => {
                depth -= 1;
                cur.push(ch);
            }
            (None, ',') if depth == 0 => parts.push(std::mem::take(&mut cur)),
            (None, c) => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        parts.push(cur);
    }
    parts
}

/// Extracts a flat key-value record from an LLM reply: a JSON object or a
/// Python-style dictionary such as `{city: Albany, radius: 3 miles}`.
pub fn parse_record(reply: &str) -> Result<BTreeMap<String, String>, IntentError> {
    let start = reply.find('{');
    let end = reply.rfind('}');
    let (Some(start), Some(end)) = (start, end) else {
        return Err(IntentError::UnparseableReply(reply.chars().take(200).collect()));
    };
    if end <= start {
        return Err(IntentError::UnparseableReply(reply.chars().take(200).collect()));
    }
    let body = &reply[start..=end];
    if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(body) {
        if map.is_empty() {
            return Err(IntentError::UnparseableReply(body.to_string()));
        }
        return Ok(map
            .into_iter()
            .filter(|(_, v)| !v.is_null())
            .map(|(k, v)| {
                let v = match v {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
                (normalize_key(&k), v)
            })
            .collect());
    }
    let inner = &body[1..body.len() - 1];
    let mut out = BTreeMap::new();
    for part in split_top_level(inner) {
        let Some((k, v)) = part.split_once(':') else {
            continue;
        };
        let v = unquote(v);
        if v.eq_ignore_ascii_case("none") || v.eq_ignore_ascii_case("null") || v.is_empty() {
            continue;
        }
        out.insert(normalize_key(k), v);
    }
    if out.is_empty() {
        return Err(IntentError::UnparseableReply(body.chars().take(200).collect()));
    }
    Ok(out)
}

fn kind_from_label(label: &str) -> Option<IntentKind> {
    let l = label.to_lowercase().replace([' ', '-'], "_");
    let kind = match l.as_str() {
        "generate_real_world" | "generaterealworld" | "real_world" | "realworld" | "generate"
        | "generation" | "real" => IntentKind::GenerateRealWorld,
        "generate_abstract" | "generateabstract" | "abstract" | "grid" | "spider" => {
            IntentKind::GenerateAbstract
        }
        "edge_remove" | "edgeremove" | "remove_edge" | "remove" | "edge_edit" | "remove_street" => {
            IntentKind::EdgeRemove
        }
        "lane_remove" | "laneremove" | "remove_lane" | "lane_edit" => IntentKind::LaneRemove,
        "tls_offset" | "tlsoffset" | "offset" | "traffic_light_offset" | "offsets" => {
            IntentKind::TlsOffset
        }
        "tls_adaptation" | "tlsadaptation" | "adaptation" | "traffic_light_adaptation" | "webster" => {
            IntentKind::TlsAdaptation
        }
        "add_vehicle" | "addvehicle" | "vehicle_generate" | "vehicle" => IntentKind::AddVehicle,
        "vehicle_mix" | "vehiclemix" | "vehicle_type" | "vehicle_type_edit" | "mix" => {
            IntentKind::VehicleMix
        }
        "compare" | "comparison" => IntentKind::Compare,
        "clarify" | "unknown" => IntentKind::Clarify,
        _ => return None,
    };
    Some(kind)
}

fn first<'a>(rec: &'a BTreeMap<String, String>, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| rec.get(*k).map(String::as_str))
}

fn number(rec: &BTreeMap<String, String>, keys: &[&str]) -> Option<f64> {
    first(rec, keys).and_then(|v| {
        v.trim()
            .trim_end_matches(|c: char| c.is_alphabetic() || c == '%' || c.is_whitespace())
            .parse()
            .ok()
    })
}

/// Maps a key-value record to an intent; unknown keys are ignored.
pub fn intent_from_record(rec: &BTreeMap<String, String>) -> Intent {
    let mut s = SlotMap {
        city: first(rec, &["city", "place", "location"]).map(str::to_string),
        radius_m: first(rec, &["radius", "radius_m", "size"]).and_then(|v| {
            parse_length(v).or_else(|| v.trim().parse::<f64>().ok().map(|mi| mi * METERS_PER_MILE))
        }),
        traffic_condition: first(rec, &["traffic_condition", "traffic", "volume", "condition"])
            .and_then(TrafficCondition::parse),
        network_kind: first(rec, &["network_kind", "network", "network_type", "type_of_network"])
            .and_then(|v| match v.to_lowercase().as_str() {
                "grid" => Some(NetworkKind::Grid),
                "spider" => Some(NetworkKind::Spider),
                _ => None,
            }),
        edge_name: first(rec, &["edge_name", "street", "street_name", "road", "edge"])
            .map(str::to_string),
        lane_index: number(rec, &["lane_index", "lane"]).map(|v| v as usize),
        origin_edge: first(rec, &["origin_edge", "origin", "from", "depart_edge"]).map(str::to_string),
        dest_edge: first(rec, &["dest_edge", "destination", "destination_edge", "to", "arrival_edge"])
            .map(str::to_string),
        ev_proportion: number(rec, &["ev_proportion", "electric_proportion", "ev", "electric"]),
        compare_run_ids: first(rec, &["compare_run_ids", "runs", "run_ids"]).map(|v| {
            v.split(|c: char| !c.is_ascii_digit())
                .filter_map(|t| t.parse().ok())
                .collect()
        }),
        ..SlotMap::default()
    };
    if let Some(kind) = s.network_kind {
        let spacing = number(rec, &["spacing", "spacing_m", "distance"]);
        match kind {
            NetworkKind::Grid => {
                let d = GridParams::default();
                s.grid_params = Some(GridParams {
                    rows: number(rec, &["rows"]).map_or(d.rows, |v| v as usize),
                    cols: number(rec, &["cols", "columns"]).map_or(d.cols, |v| v as usize),
                    spacing_m: spacing.unwrap_or(d.spacing_m),
                });
            }
            NetworkKind::Spider => {
                let d = SpiderParams::default();
                s.spider_params = Some(SpiderParams {
                    arms: number(rec, &["arms"]).map_or(d.arms, |v| v as usize),
                    circles: number(rec, &["circles", "rings"]).map_or(d.circles, |v| v as usize),
                    spacing_m: spacing.unwrap_or(d.spacing_m),
                });
            }
        }
    }
    let kind = first(rec, &["kind", "intent", "type", "modification", "action"])
        .and_then(kind_from_label)
        .unwrap_or(if s.network_kind.is_some() {
            IntentKind::GenerateAbstract
        } else if s.city.is_some() {
            IntentKind::GenerateRealWorld
        } else if s.edge_name.is_some() && s.lane_index.is_some() {
            IntentKind::LaneRemove
        } else if s.edge_name.is_some() {
            IntentKind::EdgeRemove
        } else if s.origin_edge.is_some() || s.dest_edge.is_some() {
            IntentKind::AddVehicle
        } else if s.ev_proportion.is_some() {
            IntentKind::VehicleMix
        } else {
            IntentKind::Clarify
        });
    if kind == IntentKind::Clarify {
        return Intent::clarify();
    }
    Intent::with(kind, s)
}

/// Intent extraction through a chat-completion endpoint.
pub struct LlmBackend {
    transport: Box<dyn ChatTransport>,
}

impl LlmBackend {
    pub fn new(transport: Box<dyn ChatTransport>) -> Self {
        LlmBackend { transport }
    }

    pub fn parse_text(&self, text: &str) -> Result<Intent, IntentError> {
        let reply = self.transport.complete(SYSTEM_PROMPT, text)?;
        Ok(intent_from_record(&parse_record(&reply)?))
    }
}

// ---------------------------------------------------------------------------
// Front door

pub enum Backend {
    Rules(RulesBackend),
    Llm(LlmBackend),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedTurn {
    pub intent: Intent,
    /// The LLM was unreachable and the rules backend answered instead.
    pub degraded: bool,
}

pub struct IntentParser {
    backend: Backend,
    rules: RulesBackend,
}

impl Default for IntentParser {
    fn default() -> Self {
        Self::rules()
    }
}

impl IntentParser {
    pub fn rules() -> Self {
        IntentParser {
            backend: Backend::Rules(RulesBackend),
            rules: RulesBackend,
        }
    }

    pub fn llm(transport: Box<dyn ChatTransport>) -> Self {
        IntentParser {
            backend: Backend::Llm(LlmBackend::new(transport)),
            rules: RulesBackend,
        }
    }

    pub fn is_llm(&self) -> bool {
        matches!(self.backend, Backend::Llm(_))
    }

    /// Parses one turn. A bare answer to an outstanding clarification (the last
    /// intent in `history` being insufficient) is merged into that intent.
    pub fn parse_turn(&self, turn: &UserTurn, history: &[Intent]) -> ParsedTurn {
        let (fresh, degraded) = match &self.backend {
            Backend::Rules(r) => (r.parse_text(&turn.text), false),
            Backend::Llm(llm) => match llm.parse_text(&turn.text) {
                Ok(intent) => (intent, false),
                Err(IntentError::BackendUnavailable(_)) => (self.rules.parse_text(&turn.text), true),
                Err(_) => (Intent::clarify(), false),
            },
        };
        let fresh = fresh.sanitized();
        let pending = history
            .last()
            .filter(|p| p.kind != IntentKind::Clarify)
            .and_then(|p| check_sufficiency(p).ok().filter(|r| !r.sufficient).map(|r| (p, r)));
        let intent = match pending {
            Some((prev, report)) if fresh.kind == IntentKind::Clarify => self
                .rules
                .answer(prev, &report.missing, &turn.text)
                .map(Intent::sanitized)
                .unwrap_or(fresh),
            Some((prev, _)) if fresh.kind == prev.kind => {
                let mut merged = prev.clone();
                merged.slots.merge_from(&fresh.slots);
                merged
            }
            // "grid" in answer to "which city?" switches generators but keeps the traffic level
            Some((prev, _)) if prev.kind.is_generation() && fresh.kind.is_generation() => {
                let mut switched = fresh;
                switched.slots.traffic_condition = switched.slots.traffic_condition.or(prev.slots.traffic_condition);
                switched
            }
            _ => fresh,
        };
        ParsedTurn { intent, degraded }
    }
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

/// A phrasing the rules backend maps back to `intent`.
pub fn canonical_phrase(intent: &Intent) -> String {
    let s = &intent.slots;
    let traffic = |out: &mut String| {
        if let Some(t) = s.traffic_condition {
            out.push_str(&format!(", and the volume of traffic should be {}", t.as_str()));
        }
    };
    match intent.kind {
        IntentKind::GenerateRealWorld => {
            let mut out = String::from("Generate a simulation");
            if let Some(city) = &s.city {
                out.push_str(&format!(" in city {city}"));
            }
            if let Some(r) = s.radius_m {
                out.push_str(&format!(" with a radius of {} meters", fmt_num(r)));
            }
            traffic(&mut out);
            out.push('.');
            out
        }
        IntentKind::GenerateAbstract => {
            let mut out = match (s.network_kind, s.grid_params, s.spider_params) {
                (Some(NetworkKind::Grid), Some(g), _) => format!(
                    "Generate a {}x{} grid network with {} m spacing",
                    g.rows,
                    g.cols,
                    fmt_num(g.spacing_m)
                ),
                (Some(NetworkKind::Spider), _, Some(p)) => format!(
                    "Generate a spider network with {} arms, {} circles and {} m spacing",
                    p.arms,
                    p.circles,
                    fmt_num(p.spacing_m)
                ),
                (Some(NetworkKind::Grid), None, _) => "Generate a grid network".into(),
                (Some(NetworkKind::Spider), _, None) => "Generate a spider network".into(),
                (None, _, _) => "Generate an abstract network".into(),
            };
            traffic(&mut out);
            out.push('.');
            out
        }
        IntentKind::EdgeRemove => match &s.edge_name {
            Some(name) => format!("I want to remove {name}."),
            None => "I want to remove a street.".into(),
        },
        IntentKind::LaneRemove => format!(
            "I'd like to remove the {} lane in {}.",
            ordinal(s.lane_index.unwrap_or(0) + 1),
            s.edge_name.as_deref().unwrap_or("the street")
        ),
        IntentKind::TlsOffset => "I want to set traffic light offsets for the simulation.".into(),
        IntentKind::TlsAdaptation => {
            "I want to adapt the traffic light cycles with Webster's formula.".into()
        }
        IntentKind::AddVehicle => format!(
            "Add a vehicle from {} to {}.",
            s.origin_edge.as_deref().unwrap_or("?"),
            s.dest_edge.as_deref().unwrap_or("?")
        ),
        IntentKind::VehicleMix => format!(
            "I want to set the proportion of electric vehicles as {}.",
            s.ev_proportion.map_or("?".into(), fmt_num)
        ),
        IntentKind::Compare => match &s.compare_run_ids {
            Some(ids) if !ids.is_empty() => format!(
                "Compare {}.",
                ids.iter().map(|i| format!("run {i}")).collect::<Vec<_>>().join(" and ")
            ),
            _ => "Compare the last two simulations.".into(),
        },
        IntentKind::Clarify => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Intent {
        RulesBackend.parse_text(text)
    }

    #[test]
    fn published_generation_example() {
        let i = parse("Generate a simulation in city Albany with a radius of 3miles, and the volume of traffic should be medium.");
        assert_eq!(i.kind, IntentKind::GenerateRealWorld);
        assert_eq!(i.slots.city.as_deref(), Some("Albany"));
        assert!((i.slots.radius_m.unwrap() - 4828.032).abs() < 0.01);
        assert_eq!(i.slots.traffic_condition, Some(TrafficCondition::Medium));
    }

    #[test]
    fn empty_is_clarify() {
        assert_eq!(parse(""), Intent::clarify());
        assert_eq!(parse("   "), Intent::clarify());
    }

    #[test]
    fn remove_madison() {
        let i = parse("I want to remove Madison Avenue");
        assert_eq!(i.kind, IntentKind::EdgeRemove);
        assert_eq!(i.slots.edge_name.as_deref(), Some("Madison Avenue"));
    }

    #[test]
    fn unit_normalization() {
        for text in ["3 miles", "3mi", "3miles", "3 mile", "3-mile"] {
            let r = parse_length(text).unwrap();
            assert!((r - 4828.03).abs() <= 0.01, "{text}: {r}");
        }
        assert_eq!(parse_length("2 km"), Some(2000.0));
        assert_eq!(parse_length("800 m"), Some(800.0));
        assert_eq!(parse_length("half a mile"), Some(804.672));
        assert_eq!(parse_length("nothing"), None);
    }

    #[test]
    fn sufficiency_defaults_for_real_world() {
        let mut i = Intent::new(IntentKind::GenerateRealWorld);
        i.slots.city = Some("Albany".into());
        let r = check_sufficiency(&i).unwrap();
        assert!(r.sufficient);
        assert!(r.missing.is_empty());
        assert_eq!(r.resolved.slots.radius_m, Some(METERS_PER_MILE));
        assert_eq!(r.resolved.slots.traffic_condition, Some(TrafficCondition::Medium));
    }

    #[test]
    fn sufficiency_abstract_needs_kind() {
        let r = check_sufficiency(&Intent::new(IntentKind::GenerateAbstract)).unwrap();
        assert!(!r.sufficient);
        assert_eq!(r.missing, vec![Slot::NetworkKind]);
        let mut i = Intent::new(IntentKind::GenerateAbstract);
        i.slots.network_kind = Some(NetworkKind::Spider);
        let r = check_sufficiency(&i).unwrap();
        assert!(r.sufficient);
        assert_eq!(r.resolved.slots.spider_params, Some(SpiderParams::default()));
    }

    #[test]
    fn sufficiency_add_vehicle_and_invalid_values() {
        let mut i = Intent::new(IntentKind::AddVehicle);
        i.slots.origin_edge = Some("a".into());
        i.slots.dest_edge = Some("b".into());
        assert!(check_sufficiency(&i).unwrap().sufficient);
        let mut m = Intent::new(IntentKind::VehicleMix);
        m.slots.ev_proportion = Some(1.5);
        let r = check_sufficiency(&m).unwrap();
        assert_eq!(r.missing, vec![Slot::EvProportion]);
        assert!(check_sufficiency(&Intent::new(IntentKind::TlsOffset)).unwrap().sufficient);
        assert_eq!(check_sufficiency(&Intent::clarify()), Err(IntentError::NothingToCheck));
    }

    #[test]
    fn clarification_templates() {
        let report = |missing: Vec<Slot>| SufficiencyReport {
            sufficient: missing.is_empty(),
            missing,
            resolved: Intent::clarify(),
        };
        assert_eq!(
            render_clarification(&report(vec![Slot::NetworkKind])).unwrap(),
            "Which network type do you want: grid or spider?"
        );
        assert_eq!(
            render_clarification(&report(vec![Slot::EdgeName])).unwrap(),
            "Which street should I remove?"
        );
        assert_eq!(render_clarification(&report(vec![])), Err(IntentError::NothingMissing));
        let two = render_clarification(&report(vec![Slot::OriginEdge, Slot::DestEdge])).unwrap();
        assert_eq!(two, "Please tell me the origin road and the destination road.");
    }

    #[test]
    fn record_parsing_python_and_json() {
        let rec = parse_record("Sure! {city: Albany, radius: 3 miles, traffic condition: medium}").unwrap();
        assert_eq!(rec["city"], "Albany");
        assert_eq!(rec["traffic_condition"], "medium");
        let i = intent_from_record(&rec);
        assert_eq!(i.kind, IntentKind::GenerateRealWorld);
        assert!((i.slots.radius_m.unwrap() - 4828.032).abs() < 1e-9);

        let rec = parse_record(r#"{"kind": "vehicle_mix", "ev_proportion": 0.5, "extra": [1, 2]}"#).unwrap();
        let i = intent_from_record(&rec);
        assert_eq!(i.kind, IntentKind::VehicleMix);
        assert_eq!(i.slots.ev_proportion, Some(0.5));

        let rec = parse_record("{'kind': 'compare', 'compare_run_ids': [1, 3]}").unwrap();
        assert_eq!(intent_from_record(&rec).slots.compare_run_ids, Some(vec![1, 3]));

        assert!(matches!(parse_record("no dict here"), Err(IntentError::UnparseableReply(_))));
        assert!(matches!(parse_record("{}"), Err(IntentError::UnparseableReply(_))));
    }

    struct Canned(Result<String, LlmError>);
    impl ChatTransport for Canned {
        fn complete(&self, system: &str, _user: &str) -> Result<String, LlmError> {
            assert_eq!(system, SYSTEM_PROMPT);
            self.0.clone()
        }
    }

    fn turn(text: &str) -> UserTurn {
        UserTurn {
            session_id: "s".into(),
            text: text.into(),
            turn_index: 0,
        }
    }

    #[test]
    fn llm_backend_paths() {
        let ok = IntentParser::llm(Box::new(Canned(Ok("{city: Troy, traffic condition: heavy}".into()))));
        let p = ok.parse_turn(&turn("whatever"), &[]);
        assert!(!p.degraded);
        assert_eq!(p.intent.slots.city.as_deref(), Some("Troy"));

        let down = IntentParser::llm(Box::new(Canned(Err(LlmError::Unavailable("down".into())))));
        let p = down.parse_turn(&turn("I want to remove Madison Avenue"), &[]);
        assert!(p.degraded);
        assert_eq!(p.intent.kind, IntentKind::EdgeRemove);

        let garbled = IntentParser::llm(Box::new(Canned(Ok("I am not a dictionary".into()))));
        let p = garbled.parse_turn(&turn("I want to remove Madison Avenue"), &[]);
        assert_eq!(p.intent.kind, IntentKind::Clarify);
        assert!(!p.degraded);
    }

    #[test]
    fn llm_invalid_slots_are_dropped() {
        let p = IntentParser::llm(Box::new(Canned(Ok("{kind: vehicle_mix, ev_proportion: 3}".into()))))
            .parse_turn(&turn("x"), &[]);
        assert_eq!(p.intent.kind, IntentKind::VehicleMix);
        assert_eq!(p.intent.slots.ev_proportion, None);
    }

    #[test]
    fn follow_up_answers_fill_pending_intent() {
        let parser = IntentParser::rules();
        let pending = parser.parse_turn(&turn("Generate an abstract network"), &[]).intent;
        assert_eq!(pending.kind, IntentKind::GenerateAbstract);
        let answered = parser.parse_turn(&turn("spider"), &[pending]).intent;
        assert_eq!(answered.slots.network_kind, Some(NetworkKind::Spider));

        let pending = parser.parse_turn(&turn("I want to remove a street"), &[]).intent;
        assert_eq!(pending.kind, IntentKind::EdgeRemove);
        assert_eq!(pending.slots.edge_name, None);
        let answered = parser.parse_turn(&turn("Lark Street"), &[pending]).intent;
        assert_eq!(answered.slots.edge_name.as_deref(), Some("Lark Street"));

        let pending = parser
            .parse_turn(&turn("Generate a simulation with heavy traffic"), &[])
            .intent;
        assert_eq!(pending.slots.city, None);
        let answered = parser.parse_turn(&turn("Albany"), &[pending]).intent;
        assert_eq!(answered.slots.city.as_deref(), Some("Albany"));
        assert_eq!(answered.slots.traffic_condition, Some(TrafficCondition::Heavy));
    }

    #[test]
    fn volumes() {
        assert_eq!(TrafficCondition::Medium.volume_per_hour(), 2000.0);
        assert_eq!(TrafficCondition::Heavy.volume_per_hour(), 3000.0);
        assert_eq!(TrafficCondition::Light.volume_per_hour(), 1000.0);
    }
}
