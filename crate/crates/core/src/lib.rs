//! Core engine for turning chat requests into traffic scenarios.
//!
//! The modules mirror the pipeline: [`intent`] reads user turns, [`geodata`]
//! and [`netmodel`] build road networks, [`demand`] produces trips,
//! [`signal`] retimes traffic lights, [`simengine`] runs the microsimulation
//! and [`analysis`] turns its output into reports.

pub mod analysis;
pub mod demand;
pub mod geodata;
pub mod intent;
pub mod llm;
pub mod netmodel;
pub mod signal;
pub mod simengine;
mod xml;

pub use analysis::{ComparisonReport, MetricsReport};
pub use demand::{DemandSet, MixSpec, Trip, VehicleType};
pub use geodata::{BoundingBox, GeoPoint, OsmDocument};
pub use intent::{Intent, IntentKind, SlotMap};
pub use netmodel::{Edge, Node, RoadNetwork, TrafficLight};
pub use simengine::{SimConfig, SimOutput};
