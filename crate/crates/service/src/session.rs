//! Chat sessions: one turn in, one response out, with runs persisted as
//! the scenario evolves.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use roadchat_core::analysis::{compare_runs, render_report, ComparisonReport, RenderMode};
use roadchat_core::demand::DemandError;
use roadchat_core::intent::{
    check_sufficiency, render_clarification, Intent, IntentKind, IntentParser, Slot, UserTurn,
};
use roadchat_core::llm::{ChatTransport, LlmError};
use roadchat_core::simengine::emit_edgedata_xml;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Edit, Engine, EngineError, Scenario, ADD_FILE, CFG_FILE, NET_FILE, ROU_FILE};
use crate::store::{Run, RunDraft, RunStore, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("run {run} cannot be rebuilt: {reason}")]
    BrokenRun { run: u32, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub text: String,
    pub intent: Option<Intent>,
    pub response: String,
    pub run_id: Option<u32>,
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum PendingEdit {
    RemoveEdges,
    RemoveLane { lane: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeOption {
    pub edge: String,
    pub description: String,
}

/// A question the next turn may answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pending {
    /// Several edges carry the street name the user gave.
    ChooseEdge {
        edit: PendingEdit,
        street: String,
        options: Vec<EdgeOption>,
    },
    /// Compare the latest run with the one before it.
    CompareOffer { run_a: u32, run_b: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub turns: Vec<TurnRecord>,
    /// Runs created in this session, oldest first. Append-only.
    pub runs: Vec<u32>,
    /// The run whose scenario the next edit starts from.
    pub current_run: Option<u32>,
    pub pending: Option<Pending>,
}

impl Session {
    pub fn new(session_id: String) -> Self {
        Session {
            session_id,
            turns: Vec::new(),
            runs: Vec::new(),
            current_run: None,
            pending: None,
        }
    }

    fn intents(&self) -> Vec<Intent> {
        self.turns.iter().filter_map(|t| t.intent.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clarification {
    pub question: String,
    pub missing: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disambiguation {
    pub street: String,
    pub options: Vec<EdgeOption>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    pub session_id: String,
    pub response: String,
    pub intent: Option<Intent>,
    /// The language model was unreachable and the rules parser stood in.
    pub degraded: bool,
    pub run: Option<Run>,
    pub clarification: Option<Clarification>,
    pub disambiguation: Option<Disambiguation>,
    pub comparison: Option<ComparisonReport>,
    /// Set when the turn failed; nothing was changed.
    pub error: Option<String>,
}

/// What a turn decided, before anything is written.
#[derive(Default)]
struct Outcome {
    response: String,
    intent: Option<Intent>,
    degraded: bool,
    new_run: Option<NewRun>,
    clarification: Option<Clarification>,
    disambiguation: Option<Disambiguation>,
    comparison: Option<ComparisonReport>,
    pending: Option<Pending>,
}

struct NewRun {
    scenario: Scenario,
    label: String,
    parent: Option<u32>,
    note: String,
}

#[derive(Debug, Error)]
enum TurnError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{0}")]
    Message(String),
}

impl From<StoreError> for TurnError {
    fn from(e: StoreError) -> Self {
        TurnError::Service(e.into())
    }
}

/// Lets the intent parser and the report writer share one transport.
struct Shared(Arc<dyn ChatTransport>);

impl ChatTransport for Shared {
    fn complete(&self, system: &str, user: &str) -> Result<String, LlmError> {
        self.0.complete(system, user)
    }
}

const HELP: &str = "I can generate a simulation of a city (\"Generate a simulation in city Albany with a \
radius of 1 mile and medium traffic\") or an abstract grid or spider network, then remove streets or \
lanes, add a vehicle, change the share of electric vehicles, set traffic light offsets, adapt the \
traffic light timing, and compare runs.";

fn normalized(text: &str) -> String {
    text.trim()
        .trim_end_matches(['.', '!', '?'])
        .trim()
        .to_lowercase()
}

fn is_yes(text: &str) -> bool {
    matches!(
        normalized(text).as_str(),
        "yes" | "y" | "yeah" | "yep" | "sure" | "ok" | "okay" | "please" | "yes please" | "please do" | "do it"
    )
}

fn is_no(text: &str) -> bool {
    matches!(normalized(text).as_str(), "no" | "n" | "nope" | "no thanks" | "no thank you" | "not now")
}

/// Resolves an answer to an edge choice: an option number, an edge id, or "all".
fn choose(options: &[EdgeOption], text: &str) -> Option<Vec<String>> {
    let t = normalized(text);
    let all = || options.iter().map(|o| o.edge.clone()).collect();
    if matches!(t.as_str(), "all" | "all of them" | "every one" | "both" | "remove all" | "all edges") {
        return Some(all());
    }
    if let Ok(k) = t.trim_start_matches('#').parse::<usize>() {
        return match k {
            k if (1..=options.len()).contains(&k) => Some(vec![options[k - 1].edge.clone()]),
            k if k == options.len() + 1 => Some(all()),
            _ => None,
        };
    }
    options
        .iter()
        .find(|o| o.edge.to_lowercase() == t)
        .map(|o| vec![o.edge.clone()])
}

fn edit_for(pending: PendingEdit, street: &str, edges: Vec<String>) -> Edit {
    match pending {
        PendingEdit::RemoveEdges => Edit::RemoveEdges {
            name: street.to_string(),
            edges,
        },
        PendingEdit::RemoveLane { lane } => Edit::RemoveLane {
            name: street.to_string(),
            edges,
            lane,
        },
    }
}

fn option_list(street: &str, options: &[EdgeOption], verb: &str) -> String {
    let mut s = format!(
        "There are {} roads named {street}. Which one should I {verb}? Reply with a number, an edge id, or \"all\".",
        options.len()
    );
    for (i, o) in options.iter().enumerate() {
        s.push_str(&format!("\n{}. {}", i + 1, o.description));
    }
    s.push_str(&format!("\n{}. all of them", options.len() + 1));
    s
}

pub struct Service {
    pub store: RunStore,
    pub engine: Engine,
    parser: IntentParser,
    reporter: Option<Arc<dyn ChatTransport>>,
}

impl Service {
    pub fn new(store: RunStore, engine: Engine) -> Self {
        Service {
            store,
            engine,
            parser: IntentParser::rules(),
            reporter: None,
        }
    }

    /// Routes intent parsing and report prose through `chat`.
    pub fn with_llm(mut self, chat: Arc<dyn ChatTransport>) -> Self {
        self.parser = IntentParser::llm(Box::new(Shared(chat.clone())));
        self.reporter = Some(chat);
        self
    }

    pub fn create_session(&self) -> Result<Session, ServiceError> {
        Ok(self.store.create_session()?)
    }

    pub fn history(&self, session_id: &str) -> Result<Session, ServiceError> {
        Ok(self.store.load_session(session_id)?)
    }

    pub fn compare(&self, run_a: u32, run_b: u32) -> Result<ComparisonReport, ServiceError> {
        let a = self.store.load_run(run_a)?;
        let b = self.store.load_run(run_b)?;
        Ok(compare_runs(&a.metrics, &b.metrics, Some(run_a), Some(run_b)))
    }

    /// Rebuilds the scenario a run simulated from its stored bundle.
    pub fn scenario_of(&self, run: &Run) -> Result<Scenario, ServiceError> {
        let files = self.store.scenario_files(run)?;
        Scenario::from_files(run.inputs.clone(), &files).map_err(|e| ServiceError::BrokenRun {
            run: run.run_id,
            reason: e.to_string(),
        })
    }

    /// Copies the run's SUMO bundle into `dir` and returns the written paths.
    pub fn export_scenario(&self, run_id: u32, dir: &Path) -> Result<Vec<PathBuf>, ServiceError> {
        let run = self.store.load_run(run_id)?;
        let files = self.store.scenario_files(&run)?;
        std::fs::create_dir_all(dir).map_err(StoreError::from)?;
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: &[u8]| -> Result<(), ServiceError> {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(StoreError::from)?;
            written.push(p);
            Ok(())
        };
        put(NET_FILE, &files.net)?;
        put(ROU_FILE, &files.rou)?;
        if let Some(add) = &files.add {
            put(ADD_FILE, add)?;
        }
        put(CFG_FILE, &files.sumocfg)?;
        Ok(written)
    }

    pub fn handle_turn(&self, session_id: &str, text: &str) -> Result<TurnResult, ServiceError> {
        let _guard = self.store.lock_session(session_id)?;
        let mut session = self.store.load_session(session_id)?;
        let outcome = match self.decide(&session, text) {
            Ok(o) => o,
            Err(TurnError::Service(e @ ServiceError::Store(_))) => return Err(e),
            Err(e) => return Ok(self.failed(session_id, e)),
        };
        let run = match outcome.new_run {
            Some(new_run) => match self.execute(&session, new_run) {
                Ok(run) => Some(run),
                Err(TurnError::Service(e @ ServiceError::Store(_))) => return Err(e),
                Err(e) => return Ok(self.failed(session_id, e)),
            },
            None => None,
        };

        let mut response = outcome.response;
        let mut pending = outcome.pending;
        if let Some(run) = &run {
            if !response.is_empty() {
                response.push_str("\n\n");
            }
            response.push_str(&run.report);
            if let Some(prev) = session.current_run {
                response.push_str(&format!(
                    "\n\nWould you like to compare run {} ({}) with run {prev}?",
                    run.run_id, run.label
                ));
                pending = Some(Pending::CompareOffer {
                    run_a: prev,
                    run_b: run.run_id,
                });
            }
            session.runs.push(run.run_id);
            session.current_run = Some(run.run_id);
        }
        if outcome.degraded {
            response = format!("(The language model was unreachable, so the built-in parser read your request.)\n{response}");
        }
        let record = TurnRecord {
            text: text.to_string(),
            intent: outcome.intent.clone(),
            response: response.clone(),
            run_id: run.as_ref().map(|r| r.run_id),
            degraded: outcome.degraded,
        };
        session.turns.push(record.clone());
        session.pending = pending;
        if let Err(e) = self.store.commit_turn(&session, &record) {
            if let Some(run) = &run {
                let _ = self.store.discard_run(run.run_id);
            }
            return Err(e.into());
        }
        Ok(TurnResult {
            session_id: session_id.to_string(),
            response,
            intent: outcome.intent,
            degraded: outcome.degraded,
            run,
            clarification: outcome.clarification,
            disambiguation: outcome.disambiguation,
            comparison: outcome.comparison,
            error: None,
        })
    }

    fn failed(&self, session_id: &str, e: TurnError) -> TurnResult {
        TurnResult {
            session_id: session_id.to_string(),
            response: format!("Sorry, I could not do that: {e}"),
            intent: None,
            degraded: false,
            run: None,
            clarification: None,
            disambiguation: None,
            comparison: None,
            error: Some(e.to_string()),
        }
    }

    fn execute(&self, session: &Session, new_run: NewRun) -> Result<Run, TurnError> {
        let (out, metrics) = self.engine.simulate(&new_run.scenario)?;
        let mode = match &self.reporter {
            Some(chat) => RenderMode::Llm(chat.as_ref()),
            None => RenderMode::Template,
        };
        let report = render_report(&metrics, mode);
        let files = new_run.scenario.files();
        let run = self.store.persist_run(RunDraft {
            session_id: &session.session_id,
            label: new_run.label,
            parent: new_run.parent,
            inputs: new_run.scenario.inputs.clone(),
            files: &files,
            edgedata: emit_edgedata_xml(&out),
            metrics,
            report: format!("{}\n{report}", new_run.note).trim_start().to_string(),
        })?;
        Ok(run)
    }

    fn current(&self, session: &Session) -> Result<Option<(Run, Scenario)>, TurnError> {
        let Some(id) = session.current_run else {
            return Ok(None);
        };
        let run = self.store.load_run(id)?;
        let scenario = self.scenario_of(&run)?;
        Ok(Some((run, scenario)))
    }

    fn edited(&self, session: &Session, edit: Edit) -> Result<NewRun, TurnError> {
        let (run, scenario) = self.current(session)?.ok_or_else(|| {
            TurnError::Message("there is no simulation yet; please generate one first".into())
        })?;
        let (next, note) = scenario.apply(&edit)?;
        Ok(NewRun {
            scenario: next,
            label: edit.label(),
            parent: Some(run.run_id),
            note,
        })
    }

    fn decide(&self, session: &Session, text: &str) -> Result<Outcome, TurnError> {
        match &session.pending {
            Some(Pending::ChooseEdge { edit, street, options }) => {
                if let Some(edges) = choose(options, text) {
                    let new_run = self.edited(session, edit_for(*edit, street, edges))?;
                    return Ok(Outcome {
                        new_run: Some(new_run),
                        ..Outcome::default()
                    });
                }
            }
            Some(Pending::CompareOffer { run_a, run_b }) => {
                if is_yes(text) {
                    return self.comparison(*run_a, *run_b);
                }
                if is_no(text) {
                    return Ok(Outcome {
                        response: "All right. What would you like to change next?".into(),
                        ..Outcome::default()
                    });
                }
            }
            None => {}
        }
        if text.trim().is_empty() {
            return Ok(Outcome {
                response: HELP.into(),
                ..Outcome::default()
            });
        }

        let turn = UserTurn {
            session_id: session.session_id.clone(),
            text: text.to_string(),
            turn_index: session.turns.len(),
        };
        let parsed = self.parser.parse_turn(&turn, &session.intents());
        let mut outcome = self.dispatch(session, &parsed.intent)?;
        outcome.intent = Some(parsed.intent);
        outcome.degraded = parsed.degraded;
        Ok(outcome)
    }

    fn comparison(&self, a: u32, b: u32) -> Result<Outcome, TurnError> {
        let report = self.compare(a, b)?;
        Ok(Outcome {
            response: report.summary.clone(),
            comparison: Some(report),
            ..Outcome::default()
        })
    }

    fn dispatch(&self, session: &Session, intent: &Intent) -> Result<Outcome, TurnError> {
        if intent.kind == IntentKind::Clarify {
            return Ok(Outcome {
                response: format!("I did not understand that. {HELP}"),
                ..Outcome::default()
            });
        }
        let report = check_sufficiency(intent).map_err(|e| TurnError::Message(e.to_string()))?;
        if !report.sufficient {
            let question = render_clarification(&report).map_err(|e| TurnError::Message(e.to_string()))?;
            return Ok(Outcome {
                response: question.clone(),
                clarification: Some(Clarification {
                    question,
                    missing: report.missing,
                }),
                ..Outcome::default()
            });
        }
        let intent = report.resolved;
        let s = &intent.slots;
        let edit = match intent.kind {
            IntentKind::GenerateRealWorld | IntentKind::GenerateAbstract => {
                let scenario = self.engine.generate(&intent)?;
                let note = format!(
                    "Generated {} with {} roads, {} traffic lights and {} trips.",
                    scenario.inputs.network.describe(),
                    scenario.net.edges.len(),
                    scenario.net.traffic_lights.len(),
                    scenario.demand.trips.len()
                );
                return Ok(Outcome {
                    new_run: Some(NewRun {
                        scenario,
                        label: "initial".into(),
                        parent: None,
                        note,
                    }),
                    ..Outcome::default()
                });
            }
            IntentKind::Compare => {
                let ids = s.compare_run_ids.clone().unwrap_or_default();
                let (a, b) = match (ids.as_slice(), &session.pending, session.current_run) {
                    ([a, b, ..], _, _) => (*a, *b),
                    ([a], _, Some(cur)) => (*a, cur),
                    ([], Some(Pending::CompareOffer { run_a, run_b }), _) => (*run_a, *run_b),
                    ([], _, Some(cur)) => {
                        let run = self.store.load_run(cur)?;
                        let prev = run.parent.or_else(|| {
                            let i = session.runs.iter().position(|r| *r == cur)?;
                            i.checked_sub(1).map(|j| session.runs[j])
                        });
                        match prev {
                            Some(p) => (p, cur),
                            None => return Err(TurnError::Message("there is only one run so far; nothing to compare".into())),
                        }
                    }
                    _ => return Err(TurnError::Message("there are no runs to compare yet".into())),
                };
                return self.comparison(a, b);
            }
            IntentKind::EdgeRemove | IntentKind::LaneRemove => {
                let street = s.edge_name.clone().unwrap_or_default();
                let pending = match intent.kind {
                    IntentKind::LaneRemove => PendingEdit::RemoveLane {
                        lane: s.lane_index.unwrap_or(0),
                    },
                    _ => PendingEdit::RemoveEdges,
                };
                let Some((_, scenario)) = self.current(session)? else {
                    return Err(TurnError::Message("there is no simulation yet; please generate one first".into()));
                };
                let mut options: Vec<EdgeOption> = scenario
                    .net
                    .find_edges_by_name(&street)
                    .map_err(EngineError::from)?
                    .into_iter()
                    .map(|e| EdgeOption {
                        edge: e.id.clone(),
                        description: format!(
                            "{} from {} to {} ({:.0} m, {} lane{})",
                            e.id,
                            e.from_node,
                            e.to_node,
                            e.length,
                            e.lane_count,
                            if e.lane_count == 1 { "" } else { "s" }
                        ),
                    })
                    .collect();
                if options.is_empty() && scenario.net.edges.contains_key(street.trim()) {
                    options.push(EdgeOption {
                        edge: street.trim().to_string(),
                        description: street.trim().to_string(),
                    });
                }
                match options.len() {
                    0 => return Err(EngineError::Demand(DemandError::UnknownEdge(street)).into()),
                    1 => edit_for(pending, &street, vec![options[0].edge.clone()]),
                    _ => {
                        let verb = match pending {
                            PendingEdit::RemoveEdges => "remove".to_string(),
                            PendingEdit::RemoveLane { lane } => format!("remove lane {lane} from"),
                        };
                        return Ok(Outcome {
                            response: option_list(&street, &options, &verb),
                            disambiguation: Some(Disambiguation {
                                street: street.clone(),
                                options: options.clone(),
                            }),
                            pending: Some(Pending::ChooseEdge {
                                edit: pending,
                                street,
                                options,
                            }),
                            ..Outcome::default()
                        });
                    }
                }
            }
            IntentKind::AddVehicle => {
                let Some((_, scenario)) = self.current(session)? else {
                    return Err(TurnError::Message("there is no simulation yet; please generate one first".into()));
                };
                let resolve = |name: &str| -> Result<String, TurnError> {
                    let name = name.trim();
                    if scenario.net.edges.contains_key(name) {
                        return Ok(name.to_string());
                    }
                    scenario
                        .net
                        .find_edges_by_name(name)
                        .map_err(EngineError::from)?
                        .first()
                        .map(|e| e.id.clone())
                        .ok_or_else(|| EngineError::Demand(DemandError::UnknownEdge(name.to_string())).into())
                };
                Edit::AddVehicle {
                    origin: resolve(s.origin_edge.as_deref().unwrap_or_default())?,
                    dest: resolve(s.dest_edge.as_deref().unwrap_or_default())?,
                }
            }
            IntentKind::VehicleMix => Edit::VehicleMix {
                ev_proportion: s.ev_proportion.unwrap_or_default(),
            },
            IntentKind::TlsOffset => Edit::Offsets,
            IntentKind::TlsAdaptation => Edit::Adaptation,
            IntentKind::Clarify => unreachable!("handled above"),
        };
        Ok(Outcome {
            new_run: Some(self.edited(session, edit)?),
            ..Outcome::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(n: usize) -> Vec<EdgeOption> {
        (0..n)
            .map(|i| EdgeOption {
                edge: format!("E{i}"),
                description: String::new(),
            })
            .collect()
    }

    #[test]
    fn edge_choices() {
        let o = opts(3);
        assert_eq!(choose(&o, "2"), Some(vec!["E1".to_string()]));
        assert_eq!(choose(&o, "#1."), Some(vec!["E0".to_string()]));
        assert_eq!(choose(&o, "4").map(|v| v.len()), Some(3));
        assert_eq!(choose(&o, "All").map(|v| v.len()), Some(3));
        assert_eq!(choose(&o, "e2"), Some(vec!["E2".to_string()]));
        assert_eq!(choose(&o, "5"), None);
        assert_eq!(choose(&o, "remove Lark Street"), None);
    }

    #[test]
    fn yes_and_no() {
        assert!(is_yes("Yes."));
        assert!(is_yes(" sure! "));
        assert!(!is_yes("yes, but remove Lark Street"));
        assert!(is_no("No thanks"));
        assert!(!is_no("now"));
    }

    #[test]
    fn option_list_numbers_the_all_choice() {
        let text = option_list("Lark Street", &opts(2), "remove");
        assert!(text.starts_with("There are 2 roads named Lark Street."));
        assert!(text.ends_with("\n3. all of them"));
    }
}
