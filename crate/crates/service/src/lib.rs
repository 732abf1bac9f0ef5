//! Session handling, run persistence and the HTTP API around the scenario
//! engine in `roadchat_core`.

pub mod api;
pub mod engine;
pub mod session;
pub mod store;

pub use engine::{Edit, Engine, EngineConfig, Scenario};
pub use session::{Service, Session, TurnResult};
pub use store::{Run, RunStore};
