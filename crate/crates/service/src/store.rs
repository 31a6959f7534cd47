//! Apps and live sessions held by the service, with optional on-disk event
//! logs so sessions survive a restart.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use stgnav::app::{extract, AppModel, DEFAULT_EXPLORATION_BUDGET};
use stgnav::guidance::{event_line, read_log, write_log, Session, SessionConfig};
use stgnav::merging::{merge_all, DEFAULT_TAU};
use stgnav::planner::{PlannerConfig, DEFAULT_N_EXACT, MAX_N_EXACT};
use stgnav::stg::{load_graph, save_graph, validate, FORMAT_VERSION};
use stgnav::{Error, Execution, Result, StgGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub listen: String,
    pub idle_threshold_ms: u64,
    pub tau: f64,
    pub n_exact: usize,
    pub fixtures: Option<PathBuf>,
    pub log_dir: Option<PathBuf>,
}

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: DEFAULT_LISTEN.to_owned(),
            idle_threshold_ms: stgnav::guidance::DEFAULT_IDLE_THRESHOLD_MS,
            tau: DEFAULT_TAU,
            n_exact: DEFAULT_N_EXACT,
            fixtures: None,
            log_dir: None,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.idle_threshold_ms == 0 {
            return Err(Error::Param("idle threshold must be positive".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Param(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        if self.n_exact == 0 || self.n_exact > MAX_N_EXACT {
            return Err(Error::Param(format!(
                "n_exact must lie in 1..={MAX_N_EXACT}, got {}",
                self.n_exact
            )));
        }
        Ok(())
    }

    pub fn session_config(&self, idle_threshold_ms: Option<u64>) -> SessionConfig {
        SessionConfig {
            idle_threshold_ms: idle_threshold_ms.unwrap_or(self.idle_threshold_ms),
            planner: PlannerConfig {
                n_exact: self.n_exact,
                exec: Execution::Parallel,
            },
            allow_unknown_states: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppSource {
    AppModel,
    Stg,
}

#[derive(Debug, Clone)]
pub struct AppEntry {
    pub id: String,
    pub source: AppSource,
    pub graph: StgGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppSummary {
    pub version: String,
    pub app_id: String,
    pub source: AppSource,
    pub start_state: String,
    pub states: usize,
    pub actions: usize,
    pub activities: usize,
}

impl AppEntry {
    pub fn summary(&self) -> AppSummary {
        AppSummary {
            version: FORMAT_VERSION.to_owned(),
            app_id: self.id.clone(),
            source: self.source,
            start_state: self.graph.start_state.clone(),
            states: self.graph.states().len(),
            actions: self.graph.actions().len(),
            activities: self.graph.activities().len(),
        }
    }
}

/// Turns an uploaded document into the graph sessions run on. An app model
/// is extracted and merged; a graph is taken as is after validation.
pub fn prepare_upload(bytes: &[u8], tau: f64) -> Result<(AppSource, StgGraph)> {
    let is_app = serde_json::from_slice::<serde_json::Value>(bytes)
        .ok()
        .is_some_and(|v| v.get("true_graph").is_some());
    if is_app {
        let app = AppModel::load(bytes)?;
        let (raw, _) = extract(&app, DEFAULT_EXPLORATION_BUDGET, 0)?;
        let (merged, _, _) = merge_all(&raw, tau, Execution::Parallel)?;
        Ok((AppSource::AppModel, merged))
    } else {
        let g = load_graph(bytes)?;
        validate(&g).into_result()?;
        Ok((AppSource::Stg, g))
    }
}

pub struct SessionEntry {
    pub session: Session,
    pub app_id: Option<String>,
    opened: Instant,
    clock_offset_ms: u64,
    written: usize,
    log_path: Option<PathBuf>,
}

impl SessionEntry {
    /// Milliseconds since session start: the caller's value when given,
    /// otherwise the service clock.
    pub fn now(&self, at_ms: Option<u64>) -> u64 {
        at_ms.unwrap_or_else(|| self.clock_offset_ms + self.opened.elapsed().as_millis() as u64)
    }

    /// Appends events not yet on disk.
    pub fn flush(&mut self) -> Result<()> {
        let events = self.session.events();
        if let Some(path) = &self.log_path {
            if self.written < events.len() {
                let mut f = OpenOptions::new().append(true).open(path)?;
                let mut buf = String::new();
                for e in &events[self.written..] {
                    buf.push_str(&event_line(e));
                }
                f.write_all(buf.as_bytes())?;
            }
        }
        self.written = events.len();
        Ok(())
    }
}

pub struct Store {
    config: ServiceConfig,
    apps: RwLock<BTreeMap<String, Arc<AppEntry>>>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<SessionEntry>>>>,
    next_app: AtomicU64,
    next_session: AtomicU64,
}

fn numbered(id: &str, prefix: &str) -> Option<u64> {
    id.strip_prefix(prefix)?.parse().ok()
}

impl Store {
    /// Empty store; loads fixtures and restores logged apps and sessions
    /// when the config names those directories.
    pub fn open(config: ServiceConfig) -> Result<Store> {
        config.validate()?;
        let store = Store {
            config,
            apps: RwLock::default(),
            sessions: RwLock::default(),
            next_app: AtomicU64::new(1),
            next_session: AtomicU64::new(1),
        };
        if let Some(dir) = store.config.fixtures.clone() {
            store.load_fixtures(&dir)?;
        }
        if let Some(dir) = store.config.log_dir.clone() {
            fs::create_dir_all(dir.join("apps"))?;
            fs::create_dir_all(dir.join("sessions"))?;
            store.restore(&dir)?;
        }
        Ok(store)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn json_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == ext))
            .collect();
        files.sort();
        Ok(files)
    }

    fn load_fixtures(&self, dir: &Path) -> Result<()> {
        for path in Self::json_files(dir, "json")? {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_owned();
            let (source, graph) = prepare_upload(&fs::read(&path)?, self.config.tau)
                .map_err(|e| Error::Param(format!("fixture {}: {e}", path.display())))?;
            self.insert_app(AppEntry { id, source, graph });
        }
        Ok(())
    }

    fn restore(&self, dir: &Path) -> Result<()> {
        for path in Self::json_files(&dir.join("apps"), "json")? {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_owned();
            let graph = load_graph(&fs::read(&path)?)?;
            if let Some(n) = numbered(&id, "app-") {
                self.next_app.fetch_max(n + 1, Ordering::SeqCst);
            }
            self.insert_app(AppEntry {
                id,
                source: AppSource::Stg,
                graph,
            });
        }
        for path in Self::json_files(&dir.join("sessions"), "ndjson")? {
            let (header, events) = read_log(&fs::read_to_string(&path)?)?;
            let session = Session::replay(&header, &events)?;
            if let Some(n) = numbered(session.id(), "s-") {
                self.next_session.fetch_max(n + 1, Ordering::SeqCst);
            }
            let entry = SessionEntry {
                clock_offset_ms: events.last().map_or(0, |e| e.at_ms),
                opened: Instant::now(),
                written: session.events().len(),
                log_path: Some(path),
                app_id: None,
                session,
            };
            self.sessions
                .write()
                .expect("session table lock")
                .insert(entry.session.id().to_owned(), Arc::new(Mutex::new(entry)));
        }
        Ok(())
    }

    fn insert_app(&self, entry: AppEntry) {
        self.apps
            .write()
            .expect("app table lock")
            .insert(entry.id.clone(), Arc::new(entry));
    }

    pub fn add_app(&self, bytes: &[u8]) -> Result<AppSummary> {
        let (source, graph) = prepare_upload(bytes, self.config.tau)?;
        let id = format!("app-{}", self.next_app.fetch_add(1, Ordering::SeqCst));
        if let Some(dir) = &self.config.log_dir {
            fs::write(
                dir.join("apps").join(format!("{id}.json")),
                save_graph(&graph),
            )?;
        }
        let entry = AppEntry { id, source, graph };
        let summary = entry.summary();
        self.insert_app(entry);
        Ok(summary)
    }

    pub fn app(&self, id: &str) -> Option<Arc<AppEntry>> {
        self.apps.read().expect("app table lock").get(id).cloned()
    }

    pub fn app_ids(&self) -> Vec<String> {
        self.apps
            .read()
            .expect("app table lock")
            .keys()
            .cloned()
            .collect()
    }

    pub fn start_session(
        &self,
        app_id: &str,
        start: Option<&str>,
        idle_threshold_ms: Option<u64>,
    ) -> Result<Option<Arc<Mutex<SessionEntry>>>> {
        let Some(app) = self.app(app_id) else {
            return Ok(None);
        };
        if idle_threshold_ms == Some(0) {
            return Err(Error::Param("idle threshold must be positive".into()));
        }
        let id = format!("s-{}", self.next_session.fetch_add(1, Ordering::SeqCst));
        let start = start.unwrap_or(&app.graph.start_state);
        let session = Session::start(
            &id,
            app.graph.clone(),
            start,
            self.config.session_config(idle_threshold_ms),
        )?;
        let log_path = match &self.config.log_dir {
            Some(dir) => {
                let path = dir.join("sessions").join(format!("{id}.ndjson"));
                fs::write(&path, write_log(&session.header(), &[]))?;
                Some(path)
            }
            None => None,
        };
        let entry = Arc::new(Mutex::new(SessionEntry {
            session,
            app_id: Some(app_id.to_owned()),
            opened: Instant::now(),
            clock_offset_ms: 0,
            written: 0,
            log_path,
        }));
        self.sessions
            .write()
            .expect("session table lock")
            .insert(id, entry.clone());
        Ok(Some(entry))
    }

    pub fn session(&self, id: &str) -> Option<Arc<Mutex<SessionEntry>>> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
    }
}
