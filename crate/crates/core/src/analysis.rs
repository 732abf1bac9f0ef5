//! Run metrics, run-to-run comparison and report text.

use serde::{Deserialize, Serialize};

use crate::llm::ChatTransport;
use crate::netmodel::RoadNetwork;
use crate::simengine::{SimCounts, SimOutput};

/// Changes smaller than this many percent read as "unchanged".
pub const UNCHANGED_PERCENT: f64 = 0.5;

const REPORT_PROMPT: &str = "You summarize traffic simulation results for a non-expert. \
Write a short paragraph each on general traffic, traffic density, pollutant emission and fuel \
consumption, using only the numbers given. Do not invent numbers.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestedEdge {
    pub edge: String,
    pub street_name: String,
    /// veh/km
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean of the ten highest time-mean edge densities (veh/km).
    pub top10_density: f64,
    /// Mean over all edges (veh/km).
    pub mean_density: f64,
    /// Over arrived vehicles (s).
    pub avg_travel_time: f64,
    pub co2_t: f64,
    pub co_kg: f64,
    pub pmx_kg: f64,
    pub fuel_t: f64,
    pub electricity_kwh: f64,
    pub top10_edges: Vec<CongestedEdge>,
    pub counts: SimCounts,
}

/// Densities sorted descending, ties by edge id.
fn ranked(out: &SimOutput) -> Vec<(&str, f64)> {
    let mut v: Vec<(&str, f64)> = out.edge_density.iter().map(|(k, d)| (k.as_str(), *d)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v
}

/// Mean of the `k` largest values, or of all when there are fewer.
pub fn top_k_mean(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let n = v.len().min(k);
    if n == 0 {
        0.0
    } else {
        v[..n].iter().sum::<f64>() / n as f64
    }
}

pub fn compute_metrics(out: &SimOutput, net: &RoadNetwork) -> MetricsReport {
    let ranked = ranked(out);
    let top: Vec<CongestedEdge> = ranked
        .iter()
        .take(10)
        .map(|(id, d)| CongestedEdge {
            edge: id.to_string(),
            street_name: net.edges.get(*id).map(|e| e.street_name.clone()).unwrap_or_default(),
            density: *d,
        })
        .collect();
    let top10_density = if top.is_empty() {
        0.0
    } else {
        top.iter().map(|e| e.density).sum::<f64>() / top.len() as f64
    };
    let mean_density = if ranked.is_empty() {
        0.0
    } else {
        ranked.iter().map(|(_, d)| d).sum::<f64>() / ranked.len() as f64
    };
    let times: Vec<f64> = out.vehicles.iter().filter_map(|v| v.travel_time).collect();
    let avg_travel_time = if times.is_empty() {
        0.0
    } else {
        times.iter().sum::<f64>() / times.len() as f64
    };
    let e = out.total_emission();
    MetricsReport {
        top10_density,
        mean_density,
        avg_travel_time,
        co2_t: e.co2 / 1e6,
        co_kg: e.co / 1e3,
        pmx_kg: e.pmx / 1e3,
        fuel_t: e.fuel / 1e6,
        electricity_kwh: e.electricity / 1e3,
        top10_edges: top,
        counts: out.counts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increased,
    Decreased,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub unit: String,
    pub value_a: f64,
    pub value_b: f64,
    pub delta: f64,
    /// `(b − a) / a · 100`; `None` against a zero baseline.
    pub percent: Option<f64>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub run_a: Option<u32>,
    pub run_b: Option<u32>,
    pub metrics: Vec<MetricDelta>,
    pub summary: String,
}

impl ComparisonReport {
    pub fn metric(&self, name: &str) -> Option<&MetricDelta> {
        self.metrics.iter().find(|m| m.metric == name)
    }
}

pub fn percent_delta(a: f64, b: f64) -> Option<f64> {
    (a != 0.0).then(|| (b - a) / a * 100.0)
}

fn direction(a: f64, b: f64, percent: Option<f64>) -> Direction {
    match percent {
        Some(p) if p.abs() < UNCHANGED_PERCENT => Direction::Unchanged,
        Some(p) if p > 0.0 => Direction::Increased,
        Some(_) => Direction::Decreased,
        None if b == a => Direction::Unchanged,
        None if b > a => Direction::Increased,
        None => Direction::Decreased,
    }
}

/// Metric name, unit and accessor, in report order.
const METRICS: &[(&str, &str, fn(&MetricsReport) -> f64)] = &[
    ("top10_density", "veh/km", |m| m.top10_density),
    ("avg_travel_time", "s", |m| m.avg_travel_time),
    ("co2", "t", |m| m.co2_t),
    ("co", "kg", |m| m.co_kg),
    ("pmx", "kg", |m| m.pmx_kg),
    ("fuel", "t", |m| m.fuel_t),
    ("electricity", "kWh", |m| m.electricity_kwh),
];

fn label(metric: &str) -> &'static str {
    match metric {
        "top10_density" => "Top-10 road density",
        "avg_travel_time" => "Average travel time",
        "co2" => "CO2 emission",
        "co" => "CO emission",
        "pmx" => "PMx emission",
        "fuel" => "Fuel consumption",
        "electricity" => "Electricity consumption",
        _ => "Metric",
    }
}

fn fmt_value(v: f64) -> String {
    if v != 0.0 && v.abs() < 0.01 {
        format!("{v:.4}")
    } else {
        format!("{v:.2}")
    }
}

fn delta_sentence(m: &MetricDelta) -> String {
    let name = label(&m.metric);
    let pct = m.percent.map_or("n/a".to_string(), |p| format!("{p:+.2}%"));
    match m.direction {
        Direction::Unchanged => format!(
            "{name} is unchanged at {} {} ({pct}).",
            fmt_value(m.value_b),
            m.unit
        ),
        dir => format!(
            "{name} {} from {} to {} {} ({pct}).",
            if dir == Direction::Increased { "increased" } else { "decreased" },
            fmt_value(m.value_a),
            fmt_value(m.value_b),
            m.unit
        ),
    }
}

/// Field-wise deltas of `b` against `a`.
pub fn compare(a: &MetricsReport, b: &MetricsReport) -> ComparisonReport {
    compare_runs(a, b, None, None)
}

pub fn compare_runs(
    a: &MetricsReport,
    b: &MetricsReport,
    run_a: Option<u32>,
    run_b: Option<u32>,
) -> ComparisonReport {
    let metrics: Vec<MetricDelta> = METRICS
        .iter()
        .map(|(name, unit, get)| {
            let (va, vb) = (get(a), get(b));
            let percent = percent_delta(va, vb);
            MetricDelta {
                metric: name.to_string(),
                unit: unit.to_string(),
                value_a: va,
                value_b: vb,
                delta: vb - va,
                percent,
                direction: direction(va, vb, percent),
            }
        })
        .collect();
    let head = match (run_a, run_b) {
        (Some(x), Some(y)) => format!("Run {y} compared with run {x}: "),
        _ => String::new(),
    };
    let summary = format!(
        "{head}{}",
        metrics.iter().map(delta_sentence).collect::<Vec<_>>().join(" ")
    );
    ComparisonReport {
        run_a,
        run_b,
        metrics,
        summary,
    }
}

/// How report prose is produced. LLM prose is decorative; the template text
/// is the canonical artifact and the fallback.
pub enum RenderMode<'a> {
    Template,
    Llm(&'a dyn ChatTransport),
}

pub fn render_template(m: &MetricsReport) -> String {
    let c = &m.counts;
    let mut out = String::new();
    out.push_str(&format!(
        "General traffic: {} vehicles entered the network and {} arrived; {} were still driving at the end, {} could not be inserted and {} were teleported.\n",
        c.inserted, c.arrived, c.unfinished, c.not_inserted, c.teleported
    ));
    match m.top10_edges.first() {
        Some(worst) => out.push_str(&format!(
            "Traffic density: the ten most congested roads average {} veh/km (network mean {} veh/km); the busiest is {} ({}) at {} veh/km.\n",
            fmt_value(m.top10_density),
            fmt_value(m.mean_density),
            if worst.street_name.is_empty() { "an unnamed road" } else { &worst.street_name },
            worst.edge,
            fmt_value(worst.density)
        )),
        None => out.push_str("Traffic density: the network has no edges to rank.\n"),
    }
    out.push_str(&format!(
        "Travel time: arrived vehicles needed {} s on average.\n",
        fmt_value(m.avg_travel_time)
    ));
    out.push_str(&format!(
        "Pollutant emission: {} t of CO2, {} kg of CO and {} kg of PMx.\n",
        fmt_value(m.co2_t),
        fmt_value(m.co_kg),
        fmt_value(m.pmx_kg)
    ));
    out.push_str(&format!(
        "Fuel consumption: {} t of fuel and {} kWh of electricity.",
        fmt_value(m.fuel_t),
        fmt_value(m.electricity_kwh)
    ));
    out
}

pub fn render_report(m: &MetricsReport, mode: RenderMode<'_>) -> String {
    let template = render_template(m);
    match mode {
        RenderMode::Template => template,
        RenderMode::Llm(chat) => {
            let payload = serde_json::to_string(m).expect("metrics serialize");
            match chat.complete(REPORT_PROMPT, &payload) {
                Ok(text) if !text.trim().is_empty() => text.trim().to_string(),
                _ => template,
            }
        }
    }
}
