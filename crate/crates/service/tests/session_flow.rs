use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use proptest::prelude::*;
use roadchat::engine::{Engine, EngineConfig, Scenario};
use roadchat::session::{Pending, Service};
use roadchat::store::{RunDraft, RunStore};
use roadchat_core::analysis::MetricsReport;
use roadchat_core::intent::IntentKind;
use roadchat_core::llm::{ChatTransport, LlmError};
use roadchat_core::simengine::SimCounts;

fn fixtures() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures"))
}

fn service(root: &Path) -> Service {
    let engine = Engine::new(EngineConfig {
        fixture_dir: Some(fixtures()),
        overpass_url: None,
        duration: 900.0,
        ..EngineConfig::default()
    });
    Service::new(RunStore::open(root).unwrap(), engine)
}

/// Every file under `root` with its bytes.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(&p, out);
            } else {
                out.insert(p.clone(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, &mut out);
    out
}

const GRID: &str = "Generate a 5 by 5 grid network with medium traffic";

#[test]
fn edit_before_generation_asks_to_generate() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let s = svc.create_session().unwrap().session_id;
    let r = svc.handle_turn(&s, "I want to set traffic light offsets for the simulation").unwrap();
    assert!(r.run.is_none());
    assert!(r.response.contains("generate"), "{}", r.response);
    assert!(svc.store.list_runs().unwrap().is_empty());
}

#[test]
fn clarification_then_answer() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let s = svc.create_session().unwrap().session_id;
    let r = svc.handle_turn(&s, "I want to see a traffic simulation with heavy traffic").unwrap();
    let c = r.clarification.expect("asks for the missing slot");
    assert!(r.run.is_none());
    assert!(!c.missing.is_empty());
    let r = svc.handle_turn(&s, "grid").unwrap();
    let run = r.run.expect("generated after the answer");
    assert_eq!(run.inputs.volume_per_hour, 3000.0);
    assert_eq!(run.label, "initial");
}

#[test]
fn real_world_generation_and_published_edits() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let s = svc.create_session().unwrap().session_id;
    let r = svc
        .handle_turn(
            &s,
            "I want to see a traffic simulation in Albany. There should be medium traffic and it should show me streets in a 1 mile radius.",
        )
        .unwrap();
    let initial = r.run.expect("initial run");
    assert_eq!(r.intent.unwrap().kind, IntentKind::GenerateRealWorld);
    assert_eq!(initial.inputs.volume_per_hour, 2000.0);
    assert!(initial.metrics.counts.inserted > 0);

    let r = svc.handle_turn(&s, "I want to set traffic light offsets for the simulation").unwrap();
    let coordinated = r.run.expect("offset run");
    assert_eq!(coordinated.parent, Some(initial.run_id));
    assert!(coordinated.inputs.signals.offsets);
    let scenario = svc.scenario_of(&coordinated).unwrap();
    assert!(scenario.net.traffic_lights.values().any(|t| t.offset > 0.0));
    assert!(r.response.contains(&format!("with run {}?", initial.run_id)));

    let r = svc.handle_turn(&s, "yes").unwrap();
    let cmp = r.comparison.expect("offer accepted");
    assert_eq!((cmp.run_a, cmp.run_b), (Some(initial.run_id), Some(coordinated.run_id)));

    let r = svc.handle_turn(&s, "I want to set the proportion of electric vehicles as 0.5.").unwrap();
    let mixed = r.run.expect("mix run");
    assert_eq!(mixed.inputs.ev_proportion, 0.5);

    let history = svc.history(&s).unwrap();
    assert_eq!(history.turns.len(), 4);
    assert_eq!(history.runs, vec![initial.run_id, coordinated.run_id, mixed.run_id]);
    assert_eq!(svc.store.read_history(&s).unwrap(), history.turns);
}

#[test]
fn street_with_many_edges_needs_a_choice() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let s = svc.create_session().unwrap().session_id;
    svc.handle_turn(&s, GRID).unwrap().run.unwrap();
    let r = svc.handle_turn(&s, "I want to remove 3rd Street").unwrap();
    let d = r.disambiguation.expect("eight segments share the name");
    assert_eq!(d.options.len(), 8);
    assert!(r.run.is_none());
    assert!(matches!(svc.history(&s).unwrap().pending, Some(Pending::ChooseEdge { .. })));

    let r = svc.handle_turn(&s, "2").unwrap();
    let run = r.run.expect("one segment removed");
    let scenario = svc.scenario_of(&run).unwrap();
    assert!(!scenario.net.edges.contains_key(&d.options[1].edge));
    assert_eq!(scenario.net.edges.len(), 80 - 1);

    let r = svc.handle_turn(&s, "remove 3rd Street").unwrap();
    assert_eq!(r.disambiguation.unwrap().options.len(), 7);
    let run = svc.handle_turn(&s, "all").unwrap().run.unwrap();
    assert_eq!(svc.scenario_of(&run).unwrap().net.edges.len(), 72);
}

#[test]
fn failing_turn_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let s = svc.create_session().unwrap().session_id;
    svc.handle_turn(&s, GRID).unwrap();
    let before = snapshot(dir.path());
    let r = svc.handle_turn(&s, "I want to remove Nowhere Boulevard").unwrap();
    assert!(r.error.unwrap().contains("Entered Roads are not in the current network"));
    assert!(r.run.is_none());
    let r = svc.handle_turn(&s, "Generate a simulation in city Atlantis with a radius of 1 mile").unwrap();
    assert!(r.error.is_some());
    assert_eq!(snapshot(dir.path()), before);
}

#[test]
fn replaying_turns_reproduces_metrics() {
    let turns = [
        GRID,
        "I want to remove 2nd Street",
        "all",
        "I want to set traffic light offsets for the simulation",
        "I want to set the proportion of electric vehicles as 0.25.",
        "Adapt the traffic lights to the demand",
    ];
    let play = || {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let s = svc.create_session().unwrap().session_id;
        let metrics: Vec<MetricsReport> = turns
            .iter()
            .filter_map(|t| svc.handle_turn(&s, t).unwrap().run.map(|r| r.metrics))
            .collect();
        (metrics, svc.history(&s).unwrap().turns.iter().map(|t| t.response.clone()).collect::<Vec<_>>())
    };
    let (a, ra) = play();
    let (b, rb) = play();
    assert_eq!(a.len(), 5);
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn concurrent_turns_in_one_session_serialize() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Arc::new(service(dir.path()));
    let s = svc.create_session().unwrap().session_id;
    let other = svc.create_session().unwrap().session_id;
    svc.handle_turn(&s, GRID).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|i| {
            let (svc, s, other) = (svc.clone(), s.clone(), other.clone());
            std::thread::spawn(move || {
                let text = format!("I want to set the proportion of electric vehicles as 0.{}.", i + 1);
                let a = svc.handle_turn(&s, &text).unwrap().run.unwrap().run_id;
                let b = svc.handle_turn(&other, GRID).unwrap().run.unwrap().run_id;
                (a, b)
            })
        })
        .collect();
    let mut ids: Vec<u32> = handles.into_iter().flat_map(|h| {
        let (a, b) = h.join().unwrap();
        [a, b]
    }).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), 8);
    let session = svc.history(&s).unwrap();
    assert_eq!(session.turns.len(), 5);
    assert_eq!(session.runs.len(), 5);
    // each edit started from the run before it
    for w in session.runs.windows(2) {
        assert_eq!(svc.store.load_run(w[1]).unwrap().parent, Some(w[0]));
    }
}

struct Scripted(&'static str);

impl ChatTransport for Scripted {
    fn complete(&self, system: &str, _user: &str) -> Result<String, LlmError> {
        if system.contains("summarize") {
            Ok("Traffic flowed well.".into())
        } else {
            Ok(self.0.into())
        }
    }
}

struct Down;

impl ChatTransport for Down {
    fn complete(&self, _: &str, _: &str) -> Result<String, LlmError> {
        Err(LlmError::Unavailable("connection refused".into()))
    }
}

#[test]
fn llm_backend_and_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path()).with_llm(Arc::new(Scripted("{network: grid, traffic condition: light}")));
    let s = svc.create_session().unwrap().session_id;
    let r = svc.handle_turn(&s, "whatever the model makes of this").unwrap();
    let run = r.run.expect("scripted reply generates a grid");
    assert_eq!(run.inputs.volume_per_hour, 1000.0);
    assert!(run.report.ends_with("Traffic flowed well."));
    assert!(!r.degraded);

    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path()).with_llm(Arc::new(Down));
    let s = svc.create_session().unwrap().session_id;
    let r = svc.handle_turn(&s, GRID).unwrap();
    assert!(r.degraded);
    let run = r.run.expect("rules parser stood in");
    assert!(run.report.contains("General traffic:"));
}

fn metrics_strategy() -> impl Strategy<Value = MetricsReport> {
    (prop::array::uniform8(0.0f64..1e6), 0usize..5000).prop_map(|(v, n)| MetricsReport {
        top10_density: v[0],
        mean_density: v[1],
        avg_travel_time: v[2],
        co2_t: v[3],
        co_kg: v[4],
        pmx_kg: v[5],
        fuel_t: v[6],
        electricity_kwh: v[7],
        top10_edges: Vec::new(),
        counts: SimCounts {
            inserted: n,
            arrived: n / 2,
            teleported: 0,
            unfinished: n - n / 2,
            not_inserted: 0,
        },
    })
}

fn small_scenario() -> Scenario {
    let e = Engine::new(EngineConfig {
        duration: 60.0,
        ..EngineConfig::default()
    });
    let intent = roadchat_core::Intent::with(
        IntentKind::GenerateAbstract,
        roadchat_core::SlotMap {
            network_kind: Some(roadchat_core::intent::NetworkKind::Grid),
            ..Default::default()
        },
    );
    e.generate(&intent).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn persisted_runs_load_back_equal(
        label in "[ -~]{0,40}",
        report in "\\PC{0,80}",
        metrics in metrics_strategy(),
        parent in proptest::option::of(1u32..100),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let sc = small_scenario();
        let files = sc.files();
        let run = store.persist_run(RunDraft {
            session_id: "s1",
            label,
            parent,
            inputs: sc.inputs.clone(),
            files: &files,
            edgedata: Vec::new(),
            metrics,
            report,
        }).unwrap();
        prop_assert_eq!(store.load_run(run.run_id).unwrap(), run.clone());
        prop_assert_eq!(store.scenario_files(&run).unwrap(), files);
    }
}
