//! Instance registry and live identification sessions.
//!
//! Each session only stores the objects still consistent with the answers
//! and asks the builder for the next query on demand, so no tree is ever
//! materialized. Mutations of one session are serialized by its own lock;
//! a submission that finds the lock held is refused rather than queued.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use querytree::io::{instance_from_json, instance_to_json};
use querytree::{next_query, BuilderConfig, Error as CoreError, Identified, Mode, NextStep, ProblemInstance};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::{ServiceError, ServiceResult};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(3600);

#[derive(Debug)]
struct StoredInstance {
    id: String,
    name: Option<String>,
    instance: Arc<ProblemInstance>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceSummary {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub objects: usize,
    pub queries: usize,
    /// Number of group labels; absent for unlabeled instances.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<usize>,
}

impl StoredInstance {
    fn summary(&self) -> InstanceSummary {
        InstanceSummary {
            id: self.id.clone(),
            name: self.name.clone(),
            objects: self.instance.num_objects(),
            queries: self.instance.num_queries(),
            groups: self.instance.labels.as_ref().map(|_| self.instance.num_groups(Mode::Group)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum Status {
    AwaitingAnswer { query: usize, query_name: String },
    Identified { result: Identified, label: String },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerRecord {
    pub query: usize,
    pub query_name: String,
    pub bit: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub object: usize,
    pub name: String,
    /// 1-based group id, group mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<u32>,
    pub posterior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCandidate {
    pub group: u32,
    pub label: String,
    pub posterior: f64,
}

/// Everything a client needs to render a session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionView {
    pub id: String,
    pub instance_id: String,
    pub config: BuilderConfig,
    pub status: Status,
    pub history: Vec<AnswerRecord>,
    pub remaining: Vec<Candidate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<GroupCandidate>>,
}

#[derive(Debug)]
struct Session {
    id: String,
    instance_id: String,
    instance: Arc<ProblemInstance>,
    config: BuilderConfig,
    remaining: Vec<usize>,
    history: Vec<AnswerRecord>,
    status: Status,
    last_active: Instant,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateSession {
    pub instance_id: String,
    #[serde(default = "BuilderConfig::gbs")]
    pub config: BuilderConfig,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SubmitAnswer {
    pub bit: u8,
    /// The question being answered; a stale value is refused, which makes
    /// retried submissions harmless.
    #[serde(default)]
    pub query: Option<usize>,
}

fn group_label(inst: &ProblemInstance, group: u32) -> String {
    inst.group_names
        .as_ref()
        .and_then(|g| g.get(group as usize - 1).cloned())
        .unwrap_or_else(|| format!("group {group}"))
}

impl Session {
    fn advance(&mut self) -> ServiceResult<()> {
        let asked: Vec<usize> = self.history.iter().map(|a| a.query).collect();
        self.status = match next_query(&self.instance, &self.remaining, &asked, &self.config) {
            Ok(NextStep::Ask { query, .. }) => Status::AwaitingAnswer {
                query,
                query_name: self.instance.query_name(query),
            },
            Ok(NextStep::Done(result)) => {
                let label = match result {
                    Identified::Object(o) => self.instance.object_name(o),
                    Identified::Group(g) => group_label(&self.instance, g),
                };
                Status::Identified { result, label }
            }
            Err(CoreError::InconsistentAnswers) => Status::Failed { reason: "inconsistent answers".into() },
            Err(CoreError::NotIdentifiable { objects }) => Status::Failed {
                reason: format!("no remaining query separates objects {objects:?}"),
            },
            Err(e) => return Err(e.into()),
        };
        Ok(())
    }

    fn posterior(&self) -> Vec<f64> {
        let mass: f64 = self.remaining.iter().map(|&o| self.instance.prior[o]).sum();
        if mass > 0.0 {
            self.remaining.iter().map(|&o| self.instance.prior[o] / mass).collect()
        } else {
            // only massless objects left: spread evenly
            vec![1.0 / self.remaining.len() as f64; self.remaining.len()]
        }
    }

    fn view(&self) -> SessionView {
        let inst = &self.instance;
        let group_mode = self.config.mode == Mode::Group;
        let posterior = self.posterior();
        let remaining: Vec<Candidate> = self
            .remaining
            .iter()
            .zip(&posterior)
            .map(|(&object, &posterior)| Candidate {
                object,
                name: inst.object_name(object),
                group: group_mode.then(|| inst.group_index(Mode::Group, object) as u32 + 1),
                posterior,
            })
            .collect();
        let groups = group_mode.then(|| {
            let mut out: Vec<GroupCandidate> = Vec::new();
            for c in &remaining {
                let g = c.group.expect("group mode");
                match out.iter_mut().find(|x| x.group == g) {
                    Some(x) => x.posterior += c.posterior,
                    None => out.push(GroupCandidate { group: g, label: group_label(inst, g), posterior: c.posterior }),
                }
            }
            out.sort_by_key(|g| g.group);
            out
        });
        SessionView {
            id: self.id.clone(),
            instance_id: self.instance_id.clone(),
            config: self.config,
            status: self.status.clone(),
            history: self.history.clone(),
            remaining,
            groups,
        }
    }
}

/// Registry of instances plus the live sessions over them.
#[derive(Debug)]
pub struct SessionService {
    instances: RwLock<HashMap<String, Arc<StoredInstance>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    data_dir: Option<PathBuf>,
    idle_timeout: Duration,
}

#[derive(Serialize, Deserialize)]
struct PersistedName {
    #[serde(default)]
    name: Option<String>,
}

impl SessionService {
    /// In-memory service; nothing is persisted.
    pub fn new(idle_timeout: Duration) -> Self {
        SessionService {
            instances: RwLock::new(HashMap::new()),
            sessions: RwLock::new(HashMap::new()),
            data_dir: None,
            idle_timeout,
        }
    }

    /// Service whose registered instances live as JSON files under
    /// `data_dir`; existing files are loaded.
    pub fn with_data_dir(data_dir: impl AsRef<Path>, idle_timeout: Duration) -> ServiceResult<Self> {
        let dir = data_dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut service = Self::new(idle_timeout);
        let mut loaded = HashMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
                continue;
            };
            let text = fs::read_to_string(&path)?;
            match parse_instance(&text) {
                Ok((name, instance)) => {
                    loaded.insert(id.clone(), Arc::new(StoredInstance { id, name, instance: Arc::new(instance) }));
                }
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable instance file"),
            }
        }
        service.instances = RwLock::new(loaded);
        service.data_dir = Some(dir);
        Ok(service)
    }

    pub fn idle_timeout(&self) -> Duration {
        self.idle_timeout
    }

    /// Registers an instance given in the instance JSON format, with an
    /// optional top-level `"name"`.
    pub fn register_instance(&self, json: &str) -> ServiceResult<InstanceSummary> {
        let (name, instance) = parse_instance(json)?;
        let id = Uuid::new_v4().simple().to_string();
        if let Some(dir) = &self.data_dir {
            let mut doc: serde_json::Value =
                serde_json::from_str(&instance_to_json(&instance)).expect("instance json is valid");
            if let Some(n) = &name {
                doc["name"] = serde_json::Value::from(n.as_str());
            }
            let text = serde_json::to_string_pretty(&doc).expect("json value serializes");
            fs::write(dir.join(format!("{id}.json")), text)?;
        }
        let stored = Arc::new(StoredInstance { id: id.clone(), name, instance: Arc::new(instance) });
        let summary = stored.summary();
        self.instances.write().insert(id, stored);
        Ok(summary)
    }

    pub fn list_instances(&self) -> Vec<InstanceSummary> {
        let mut out: Vec<InstanceSummary> = self.instances.read().values().map(|s| s.summary()).collect();
        out.sort_by(|a, b| a.name.cmp(&b.name).then_with(|| a.id.cmp(&b.id)));
        out
    }

    /// The instance in its JSON file format.
    pub fn instance_json(&self, id: &str) -> ServiceResult<String> {
        Ok(instance_to_json(&self.stored(id)?.instance))
    }

    fn stored(&self, id: &str) -> ServiceResult<Arc<StoredInstance>> {
        self.instances
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("unknown instance {id}")))
    }

    fn session(&self, id: &str) -> ServiceResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("unknown session {id}")))
    }

    pub fn create_session(&self, request: CreateSession) -> ServiceResult<SessionView> {
        let stored = self.stored(&request.instance_id)?;
        let config = request.config;
        if !config.regime.is_valid() {
            return Err(ServiceError::BadRequest(format!("invalid lambda {}", config.regime)));
        }
        if config.mode == Mode::Group && stored.instance.labels.is_none() {
            return Err(ServiceError::BadRequest("group mode needs a labeled instance".into()));
        }
        if let Err((a, b)) = stored.instance.check_identifiability(config.mode) {
            return Err(ServiceError::BadRequest(format!(
                "instance is not identifiable in {} mode: objects {a} and {b} answer every query alike",
                config.mode
            )));
        }
        let mut session = Session {
            id: Uuid::new_v4().simple().to_string(),
            instance_id: stored.id.clone(),
            instance: stored.instance.clone(),
            config,
            remaining: stored.instance.all_objects(),
            history: Vec::new(),
            status: Status::Failed { reason: "not started".into() },
            last_active: Instant::now(),
        };
        session.advance()?;
        let view = session.view();
        self.sessions.write().insert(session.id.clone(), Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn get_session(&self, id: &str) -> ServiceResult<SessionView> {
        let session = self.session(id)?;
        let mut s = session.lock();
        s.last_active = Instant::now();
        Ok(s.view())
    }

    pub fn delete_session(&self, id: &str) -> ServiceResult<()> {
        self.sessions
            .write()
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ServiceError::NotFound(format!("unknown session {id}")))
    }

    pub fn submit_answer(&self, id: &str, answer: SubmitAnswer) -> ServiceResult<SessionView> {
        let session = self.session(id)?;
        let Some(mut s) = session.try_lock() else {
            return Err(ServiceError::Conflict("another answer for this session is being processed".into()));
        };
        let bit = match answer.bit {
            0 => false,
            1 => true,
            other => return Err(ServiceError::BadRequest(format!("bit must be 0 or 1, got {other}"))),
        };
        let Status::AwaitingAnswer { query, ref query_name } = s.status else {
            return Err(ServiceError::Conflict("session is not awaiting an answer".into()));
        };
        if let Some(expected) = answer.query {
            if expected != query {
                return Err(ServiceError::Conflict(format!(
                    "answer is for query {expected} but the pending query is {query}"
                )));
            }
        }
        let record = AnswerRecord { query, query_name: query_name.clone(), bit: u8::from(bit) };
        let inst = s.instance.clone();
        s.remaining.retain(|&o| inst.response(o, query) == bit);
        s.history.push(record);
        s.last_active = Instant::now();
        s.advance()?;
        Ok(s.view())
    }

    /// Drops sessions idle for longer than the timeout; returns how many.
    pub fn evict_idle(&self) -> usize {
        let now = Instant::now();
        let mut sessions = self.sessions.write();
        let before = sessions.len();
        sessions.retain(|_, s| match s.try_lock() {
            Some(s) => now.duration_since(s.last_active) <= self.idle_timeout,
            None => true,
        });
        before - sessions.len()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().len()
    }
}

fn parse_instance(json: &str) -> ServiceResult<(Option<String>, ProblemInstance)> {
    let name: PersistedName =
        serde_json::from_str(json).map_err(|e| ServiceError::BadRequest(format!("invalid instance json: {e}")))?;
    let instance = instance_from_json(json)?;
    Ok((name.name, instance))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TOY: &str = r#"{
        "name": "toy",
        "queries": ["q_1", "q_2", "q_3"],
        "objects": [
            {"name": "theta_1", "prior": 0.25, "group": 1, "responses": [0, 1, 1]},
            {"name": "theta_2", "prior": 0.25, "group": 1, "responses": [1, 1, 0]},
            {"name": "theta_3", "prior": 0.25, "group": 1, "responses": [0, 1, 0]},
            {"name": "theta_4", "prior": 0.25, "group": 2, "responses": [1, 0, 0]}
        ]
    }"#;

    fn service_with_toy() -> (SessionService, String) {
        let svc = SessionService::new(DEFAULT_IDLE_TIMEOUT);
        let id = svc.register_instance(TOY).unwrap().id;
        (svc, id)
    }

    fn answer(bit: u8) -> SubmitAnswer {
        SubmitAnswer { bit, query: None }
    }

    #[test]
    fn group_session_identifies_in_one_question() {
        let (svc, id) = service_with_toy();
        let s = svc.create_session(CreateSession { instance_id: id.clone(), config: BuilderConfig::ggbs() }).unwrap();
        assert_eq!(s.status, Status::AwaitingAnswer { query: 1, query_name: "q_2".into() });
        let done = svc.submit_answer(&s.id, answer(0)).unwrap();
        assert_eq!(done.status, Status::Identified { result: Identified::Group(2), label: "2".into() });
        assert_eq!(done.history.len(), 1);

        let s = svc.create_session(CreateSession { instance_id: id, config: BuilderConfig::ggbs() }).unwrap();
        let done = svc.submit_answer(&s.id, answer(1)).unwrap();
        assert!(matches!(done.status, Status::Identified { result: Identified::Group(1), .. }));
        let groups = done.groups.unwrap();
        assert_eq!(groups.len(), 1);
        assert!((groups[0].posterior - 1.0).abs() < 1e-12);
    }

    #[test]
    fn answering_after_identification_conflicts() {
        let (svc, id) = service_with_toy();
        let s = svc.create_session(CreateSession { instance_id: id, config: BuilderConfig::ggbs() }).unwrap();
        svc.submit_answer(&s.id, answer(0)).unwrap();
        assert!(matches!(svc.submit_answer(&s.id, answer(0)), Err(ServiceError::Conflict(_))));
    }

    #[test]
    fn two_object_session() {
        let json = r#"{"objects":[
            {"prior":0.5,"responses":[0,0]},
            {"prior":0.5,"responses":[1,1]}]}"#;
        let svc = SessionService::new(DEFAULT_IDLE_TIMEOUT);
        let id = svc.register_instance(json).unwrap().id;
        let s = svc.create_session(CreateSession { instance_id: id, config: BuilderConfig::gbs() }).unwrap();
        let Status::AwaitingAnswer { query, .. } = s.status else { panic!() };
        assert_eq!(query, 0);
        let done = svc.submit_answer(&s.id, answer(1)).unwrap();
        assert!(matches!(done.status, Status::Identified { result: Identified::Object(1), .. }));
    }

    #[test]
    fn stale_query_is_refused() {
        let (svc, id) = service_with_toy();
        let s = svc.create_session(CreateSession { instance_id: id, config: BuilderConfig::gbs() }).unwrap();
        let err = svc.submit_answer(&s.id, SubmitAnswer { bit: 1, query: Some(2) }).unwrap_err();
        assert!(matches!(err, ServiceError::Conflict(_)));
        let ok = svc.submit_answer(&s.id, SubmitAnswer { bit: 1, query: Some(0) }).unwrap();
        assert_eq!(ok.history.len(), 1);
    }

    #[test]
    fn posterior_is_renormalized() {
        let (svc, id) = service_with_toy();
        let s = svc.create_session(CreateSession { instance_id: id, config: BuilderConfig::gbs() }).unwrap();
        let after = svc.submit_answer(&s.id, answer(0)).unwrap();
        let total: f64 = after.remaining.iter().map(|c| c.posterior).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(after.remaining.len(), 2);
    }

    #[test]
    fn unknown_ids_and_bad_requests() {
        let (svc, id) = service_with_toy();
        assert!(matches!(svc.get_session("nope"), Err(ServiceError::NotFound(_))));
        assert!(matches!(
            svc.create_session(CreateSession { instance_id: "nope".into(), config: BuilderConfig::gbs() }),
            Err(ServiceError::NotFound(_))
        ));
        let s = svc.create_session(CreateSession { instance_id: id, config: BuilderConfig::gbs() }).unwrap();
        assert!(matches!(svc.submit_answer(&s.id, answer(2)), Err(ServiceError::BadRequest(_))));
        assert!(matches!(svc.register_instance("{}"), Err(ServiceError::BadRequest(_))));
        svc.delete_session(&s.id).unwrap();
        assert!(matches!(svc.delete_session(&s.id), Err(ServiceError::NotFound(_))));
    }

    #[test]
    fn unidentifiable_instance_is_rejected() {
        let json = r#"{"objects":[{"prior":0.5,"responses":[1]},{"prior":0.5,"responses":[1]}]}"#;
        let svc = SessionService::new(DEFAULT_IDLE_TIMEOUT);
        let id = svc.register_instance(json).unwrap().id;
        let err = svc.create_session(CreateSession { instance_id: id, config: BuilderConfig::gbs() }).unwrap_err();
        assert!(matches!(err, ServiceError::BadRequest(_)));
    }

    #[test]
    fn single_object_is_identified_immediately() {
        let json = r#"{"objects":[{"name":"only","prior":1.0,"responses":[1]}]}"#;
        let svc = SessionService::new(DEFAULT_IDLE_TIMEOUT);
        let id = svc.register_instance(json).unwrap().id;
        let s = svc.create_session(CreateSession { instance_id: id, config: BuilderConfig::gbs() }).unwrap();
        assert_eq!(s.status, Status::Identified { result: Identified::Object(0), label: "only".into() });
    }

    #[test]
    fn idle_sessions_are_evicted() {
        let svc = SessionService::new(Duration::ZERO);
        let id = svc.register_instance(TOY).unwrap().id;
        svc.create_session(CreateSession { instance_id: id, config: BuilderConfig::gbs() }).unwrap();
        std::thread::sleep(Duration::from_millis(5));
        assert_eq!(svc.evict_idle(), 1);
        assert_eq!(svc.session_count(), 0);
    }

    #[test]
    fn instances_persist_across_restarts() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let svc = SessionService::with_data_dir(dir.path(), DEFAULT_IDLE_TIMEOUT).unwrap();
            svc.register_instance(TOY).unwrap().id
        };
        let svc = SessionService::with_data_dir(dir.path(), DEFAULT_IDLE_TIMEOUT).unwrap();
        let list = svc.list_instances();
        assert_eq!(list.len(), 1);
        assert_eq!(list[0].id, id);
        assert_eq!(list[0].name.as_deref(), Some("toy"));
        assert_eq!(list[0].groups, Some(2));
    }
}
