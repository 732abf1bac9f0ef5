//! Flat-file persistence: one directory per run, one per session.
//!
//! ```text
//! <root>/runs/<id>/run.json, metrics.json, net.xml, rou.xml, ...
//! <root>/sessions/<id>/session.json   current state, rewritten atomically
//! <root>/sessions/<id>/history.jsonl  one line per completed turn, append-only
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::collections::HashSet;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use roadchat_core::analysis::MetricsReport;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    ScenarioFiles, ScenarioInputs, ADD_FILE, CFG_FILE, EDGEDATA_FILE, NET_FILE, ROU_FILE,
};
use crate::session::{Session, TurnRecord};

pub const RUN_FILE: &str = "run.json";
pub const METRICS_FILE: &str = "metrics.json";
const LOCK_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("run {0} not found")]
    UnknownRun(u32),
    #[error("session `{0}` not found")]
    UnknownSession(String),
    #[error("run {run} has no `{file}` file")]
    UnknownFile { run: u32, file: String },
    #[error("timed out waiting for lock {0}; remove it if no other process is running")]
    LockTimeout(PathBuf),
    #[error("corrupt store record {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
}

/// Artifact file names, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub net: String,
    pub rou: String,
    pub add: Option<String>,
    pub sumocfg: String,
    pub edgedata: String,
    pub metrics: String,
}

impl Artifacts {
    pub fn names(&self) -> Vec<&str> {
        let mut v = vec![self.net.as_str(), self.rou.as_str()];
        v.extend(self.add.as_deref());
        v.extend([self.sumocfg.as_str(), self.edgedata.as_str(), self.metrics.as_str()]);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub run_id: u32,
    pub session_id: String,
    pub label: String,
    /// The run this one was derived from.
    pub parent: Option<u32>,
    pub status: RunStatus,
    pub inputs: ScenarioInputs,
    pub artifacts: Artifacts,
    pub metrics: MetricsReport,
    /// Report text shown to the user.
    pub report: String,
}

/// Everything needed to persist a run except its id.
pub struct RunDraft<'a> {
    pub session_id: &'a str,
    pub label: String,
    pub parent: Option<u32>,
    pub inputs: ScenarioInputs,
    pub files: &'a ScenarioFiles,
    pub edgedata: Vec<u8>,
    pub metrics: MetricsReport,
    pub report: String,
}

/// Exclusive lock held as a file created with `create_new`; removed on drop.
pub struct FileLock {
    path: PathBuf,
}

impl FileLock {
    pub fn acquire(path: PathBuf, timeout: Duration) -> Result<FileLock, StoreError> {
        let started = Instant::now();
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(FileLock { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    if started.elapsed() > timeout {
                        return Err(StoreError::LockTimeout(path));
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

impl Drop for FileLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

type BusySet = Arc<(Mutex<HashSet<String>>, Condvar)>;

/// Held for the duration of one turn. Turns in other sessions proceed.
pub struct SessionGuard {
    _file: FileLock,
    busy: BusySet,
    id: String,
}

impl Drop for SessionGuard {
    fn drop(&mut self) {
        let (set, cv) = &*self.busy;
        set.lock().unwrap_or_else(|e| e.into_inner()).remove(&self.id);
        cv.notify_all();
    }
}

pub struct RunStore {
    root: PathBuf,
    /// In-process half of the session locking; lock files cover other processes.
    busy: BusySet,
    alloc: Mutex<()>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("store records serialize");
    v.push(b'\n');
    v
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<RunStore, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("runs"))?;
        fs::create_dir_all(root.join("sessions"))?;
        Ok(RunStore {
            root,
            busy: Arc::new((Mutex::new(HashSet::new()), Condvar::new())),
            alloc: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, id: u32) -> PathBuf {
        self.root.join("runs").join(id.to_string())
    }

    fn session_dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    fn ids_in(&self, dir: &str) -> Result<Vec<String>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join(dir))? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                let name = entry.file_name().to_string_lossy().into_owned();
                if !name.starts_with('.') {
                    out.push(name);
                }
            }
        }
        Ok(out)
    }

    fn allocation_lock(&self) -> Result<(std::sync::MutexGuard<'_, ()>, FileLock), StoreError> {
        let local = self.alloc.lock().unwrap_or_else(|e| e.into_inner());
        let file = FileLock::acquire(self.root.join("store.lock"), LOCK_TIMEOUT)?;
        Ok((local, file))
    }

    pub fn create_session(&self) -> Result<Session, StoreError> {
        let _lock = self.allocation_lock()?;
        let next = self
            .ids_in("sessions")?
            .iter()
            .filter_map(|s| s.strip_prefix('s')?.parse::<u32>().ok())
            .max()
            .map_or(1, |m| m + 1);
        let session = Session::new(format!("s{next}"));
        let dir = self.session_dir(&session.session_id);
        fs::create_dir(&dir)?;
        File::create(dir.join("history.jsonl"))?;
        write_atomic(&dir.join("session.json"), &to_json(&session))?;
        Ok(session)
    }

    pub fn load_session(&self, id: &str) -> Result<Session, StoreError> {
        let path = self.session_dir(id).join("session.json");
        if !valid_session_id(id) || !path.exists() {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        read_json(&path)
    }

    pub fn list_sessions(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = self.ids_in("sessions")?;
        ids.sort_by_key(|s| (s.len(), s.clone()));
        Ok(ids)
    }

    /// Records a finished turn: the history line first, then the new state.
    pub fn commit_turn(&self, session: &Session, turn: &TurnRecord) -> Result<(), StoreError> {
        let dir = self.session_dir(&session.session_id);
        let mut line = serde_json::to_vec(turn).expect("turn serializes");
        line.push(b'\n');
        let mut f = OpenOptions::new().append(true).open(dir.join("history.jsonl"))?;
        f.write_all(&line)?;
        f.sync_all()?;
        write_atomic(&dir.join("session.json"), &to_json(session))?;
        Ok(())
    }

    /// Turns as recorded in the append-only index.
    pub fn read_history(&self, id: &str) -> Result<Vec<TurnRecord>, StoreError> {
        let path = self.session_dir(id).join("history.jsonl");
        if !valid_session_id(id) || !path.exists() {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        fs::read_to_string(&path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    /// Serializes turns of one session, across threads and processes.
    pub fn lock_session(&self, id: &str) -> Result<SessionGuard, StoreError> {
        if !valid_session_id(id) || !self.session_dir(id).exists() {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        {
            let (set, cv) = &*self.busy;
            let mut set = set.lock().unwrap_or_else(|e| e.into_inner());
            while set.contains(id) {
                set = cv.wait(set).unwrap_or_else(|e| e.into_inner());
            }
            set.insert(id.to_string());
        }
        let busy = self.busy.clone();
        let file = match FileLock::acquire(self.session_dir(id).join(".lock"), LOCK_TIMEOUT) {
            Ok(f) => f,
            Err(e) => {
                let (set, cv) = &*busy;
                set.lock().unwrap_or_else(|e| e.into_inner()).remove(id);
                cv.notify_all();
                return Err(e);
            }
        };
        Ok(SessionGuard {
            _file: file,
            busy,
            id: id.to_string(),
        })
    }

    /// Writes the run's files to a scratch directory and moves it into place
    /// under the next free id, so a run is either fully present or absent.
    pub fn persist_run(&self, draft: RunDraft<'_>) -> Result<Run, StoreError> {
        let _lock = self.allocation_lock()?;
        let run_id = self
            .ids_in("runs")?
            .iter()
            .filter_map(|s| s.parse::<u32>().ok())
            .max()
            .map_or(1, |m| m + 1);
        let artifacts = Artifacts {
            net: NET_FILE.into(),
            rou: ROU_FILE.into(),
            add: draft.files.add.as_ref().map(|_| ADD_FILE.into()),
            sumocfg: CFG_FILE.into(),
            edgedata: EDGEDATA_FILE.into(),
            metrics: METRICS_FILE.into(),
        };
        let run = Run {
            run_id,
            session_id: draft.session_id.to_string(),
            label: draft.label,
            parent: draft.parent,
            status: RunStatus::Complete,
            inputs: draft.inputs,
            artifacts,
            metrics: draft.metrics,
            report: draft.report,
        };
        let tmp = self.root.join("runs").join(format!(".tmp-{}-{run_id}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir(&tmp)?;
        let result = (|| -> io::Result<()> {
            fs::write(tmp.join(NET_FILE), &draft.files.net)?;
            fs::write(tmp.join(ROU_FILE), &draft.files.rou)?;
            if let Some(add) = &draft.files.add {
                fs::write(tmp.join(ADD_FILE), add)?;
            }
            fs::write(tmp.join(CFG_FILE), &draft.files.sumocfg)?;
            fs::write(tmp.join(EDGEDATA_FILE), &draft.edgedata)?;
            fs::write(tmp.join(METRICS_FILE), to_json(&run.metrics))?;
            fs::write(tmp.join(RUN_FILE), to_json(&run))?;
            fs::rename(&tmp, self.run_dir(run_id))
        })();
        if let Err(e) = result {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e.into());
        }
        Ok(run)
    }

    /// Drops a run written by a turn that later failed.
    pub fn discard_run(&self, id: u32) -> Result<(), StoreError> {
        let dir = self.run_dir(id);
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        Ok(())
    }

    pub fn load_run(&self, id: u32) -> Result<Run, StoreError> {
        let path = self.run_dir(id).join(RUN_FILE);
        if !path.exists() {
            return Err(StoreError::UnknownRun(id));
        }
        read_json(&path)
    }

    pub fn list_runs(&self) -> Result<Vec<Run>, StoreError> {
        let mut ids: Vec<u32> = self.ids_in("runs")?.iter().filter_map(|s| s.parse().ok()).collect();
        ids.sort_unstable();
        ids.into_iter().map(|id| self.load_run(id)).collect()
    }

    /// Raw bytes of one artifact, by file name.
    pub fn run_file(&self, id: u32, name: &str) -> Result<Vec<u8>, StoreError> {
        let run = self.load_run(id)?;
        if !run.artifacts.names().contains(&name) {
            return Err(StoreError::UnknownFile {
                run: id,
                file: name.to_string(),
            });
        }
        Ok(fs::read(self.run_dir(id).join(name))?)
    }

    pub fn scenario_files(&self, run: &Run) -> Result<ScenarioFiles, StoreError> {
        let a = &run.artifacts;
        Ok(ScenarioFiles {
            net: self.run_file(run.run_id, &a.net)?,
            rou: self.run_file(run.run_id, &a.rou)?,
            add: a.add.as_ref().map(|f| self.run_file(run.run_id, f)).transpose()?,
            sumocfg: self.run_file(run.run_id, &a.sumocfg)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Engine, EngineConfig};
    use roadchat_core::intent::{Intent, IntentKind, NetworkKind, SlotMap};

    fn scenario() -> crate::engine::Scenario {
        let e = Engine::new(EngineConfig {
            duration: 300.0,
            ..EngineConfig::default()
        });
        let intent = Intent::with(
            IntentKind::GenerateAbstract,
            SlotMap {
                network_kind: Some(NetworkKind::Grid),
                ..SlotMap::default()
            },
        );
        e.generate(&intent).unwrap()
    }

    fn draft<'a>(files: &'a ScenarioFiles, sc: &crate::engine::Scenario) -> RunDraft<'a> {
        RunDraft {
            session_id: "s1",
            label: "initial".into(),
            parent: None,
            inputs: sc.inputs.clone(),
            files,
            edgedata: b"<meandata/>".to_vec(),
            metrics: serde_json::from_str(
                r#"{"top10_density":1.0,"mean_density":0.5,"avg_travel_time":60.0,"co2_t":0.1,
                "co_kg":0.01,"pmx_kg":0.0,"fuel_t":0.03,"electricity_kwh":2.0,"top10_edges":[],
                "counts":{"inserted":1,"arrived":1,"teleported":0,"unfinished":0,"not_inserted":0}}"#,
            )
            .unwrap(),
            report: "ok".into(),
        }
    }

    #[test]
    fn runs_round_trip_and_ids_increase() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let sc = scenario();
        let files = sc.files();
        let a = store.persist_run(draft(&files, &sc)).unwrap();
        let b = store.persist_run(draft(&files, &sc)).unwrap();
        assert_eq!((a.run_id, b.run_id), (1, 2));
        assert_eq!(store.load_run(1).unwrap(), a);
        for name in a.artifacts.names() {
            assert!(store.run_dir(1).join(name).exists(), "{name}");
        }
        assert_eq!(store.scenario_files(&a).unwrap(), files);
        assert_eq!(store.list_runs().unwrap().len(), 2);
        assert!(matches!(store.load_run(9), Err(StoreError::UnknownRun(9))));
        assert!(matches!(store.run_file(1, "../x"), Err(StoreError::UnknownFile { .. })));
        // a second handle sees the same runs
        let again = RunStore::open(dir.path()).unwrap();
        assert_eq!(again.load_run(2).unwrap(), b);
    }

    #[test]
    fn sessions_and_history() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let s1 = store.create_session().unwrap();
        let s2 = store.create_session().unwrap();
        assert_eq!((s1.session_id.as_str(), s2.session_id.as_str()), ("s1", "s2"));
        let turn = TurnRecord {
            text: "hello".into(),
            intent: None,
            response: "hi".into(),
            run_id: None,
            degraded: false,
        };
        let mut s = s1.clone();
        s.turns.push(turn.clone());
        store.commit_turn(&s, &turn).unwrap();
        assert_eq!(store.load_session("s1").unwrap(), s);
        assert_eq!(store.read_history("s1").unwrap(), vec![turn]);
        assert!(store.load_session("../runs").is_err());
        assert!(store.lock_session("nope").is_err());
    }

    #[test]
    fn session_lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(RunStore::open(dir.path()).unwrap());
        let id = store.create_session().unwrap().session_id;
        let counter = Arc::new(Mutex::new((0usize, 0usize)));
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let (store, counter, id) = (store.clone(), counter.clone(), id.clone());
                std::thread::spawn(move || {
                    for _ in 0..20 {
                        let _g = store.lock_session(&id).unwrap();
                        {
                            let mut c = counter.lock().unwrap();
                            c.0 += 1;
                            c.1 = c.1.max(c.0);
                        }
                        std::thread::sleep(Duration::from_micros(200));
                        counter.lock().unwrap().0 -= 1;
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(counter.lock().unwrap().1, 1);
    }
}
