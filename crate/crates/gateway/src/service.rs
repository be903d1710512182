//! Sessions, planning and per-session execution, independent of HTTP.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{mpsc, Arc};

use parking_lot::{Mutex, RwLock};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;
use weave_core::{
    derive_request_spec, plan, probe_hardware, select_tier, Artifact, ArtifactId, Backends,
    CostFactors, EventSink, ExecError, ExecutionReport, Executor, ExecutorConfig, HardwareProfile,
    MediaType, Mode, PlanError, PlanGraph, PlanId, ProbeSource, ProgressEvent, Registry,
    RequestSpec, Role, SessionId, Store, StoreError, Tier, TierThresholds, ToolSpec, ToolsConfig,
};

use crate::hub::{Hub, Subscription};

pub const DEFAULT_EVENT_BUFFER: usize = 1024;

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Mode for sessions that do not ask for one.
    pub mode: Mode,
    pub tier_override: Option<Tier>,
    pub profile: HardwareProfile,
    pub thresholds: TierThresholds,
    pub factors: CostFactors,
    /// `None` keeps everything in memory.
    pub cache_dir: Option<PathBuf>,
    /// Base URL of the hosted backends. Without it hosted sessions are refused.
    pub hosted_url: Option<String>,
    /// Replaces the default tool set.
    pub tools: Option<ToolsConfig>,
    pub executor: ExecutorConfig,
    pub event_buffer: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Local,
            tier_override: None,
            profile: probe_hardware(ProbeSource::System),
            thresholds: TierThresholds::default(),
            factors: CostFactors::default(),
            cache_dir: None,
            hosted_url: None,
            tools: None,
            executor: ExecutorConfig::default(),
            event_buffer: DEFAULT_EVENT_BUFFER,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("unplannable: no tool path reaches {goal}")]
    Unplannable { goal: MediaType },
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl GatewayError {
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::NotFound(_) => "not_found",
            GatewayError::Validation(_) => "validation",
            GatewayError::Unplannable { .. } => "unplannable",
            GatewayError::Capacity(_) => "capacity",
            GatewayError::Conflict(_) => "conflict",
            GatewayError::Internal(_) => "internal",
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({ "kind": self.kind(), "detail": self.to_string() });
        if let GatewayError::Unplannable { goal } = self {
            v["goal"] = json!(goal);
        }
        json!({ "error": v })
    }
}

impl From<StoreError> for GatewayError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(m) => GatewayError::NotFound(m),
            StoreError::Validation(m) => GatewayError::Validation(m),
            StoreError::Conflict(m) => GatewayError::Conflict(m),
            other => GatewayError::Internal(other.to_string()),
        }
    }
}

impl From<PlanError> for GatewayError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Validation(m) => GatewayError::Validation(m),
            PlanError::Unplannable { goal } => GatewayError::Unplannable { goal },
            PlanError::Capacity(c) => GatewayError::Capacity(c.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Attachment {
    pub media: MediaType,
    pub bytes: Vec<u8>,
}

/// The immediate answer to a message; execution continues in the background.
#[derive(Debug, Clone, Serialize)]
pub struct Accepted {
    pub session_id: SessionId,
    pub turn_id: String,
    pub plan_id: PlanId,
    pub tier: Tier,
    pub mode: Mode,
    pub request: RequestSpec,
    pub plan: PlanGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanEntry {
    pub plan_id: PlanId,
    pub session_id: SessionId,
    pub status: PlanStatus,
    pub plan: PlanGraph,
    pub report: Option<ExecutionReport>,
    pub error: Option<String>,
}

struct SessionRt {
    hub: Arc<Hub>,
    worker: Option<mpsc::Sender<Job>>,
}

pub struct Gateway {
    config: GatewayConfig,
    tier: Tier,
    store: Arc<Store>,
    backends: Arc<Backends>,
    local: Executor,
    hosted: Option<Executor>,
    sessions: Mutex<HashMap<SessionId, SessionRt>>,
    plans: RwLock<BTreeMap<PlanId, PlanEntry>>,
}

/// One planned message waiting to run.
pub struct Job {
    gateway: Arc<Gateway>,
    mode: Mode,
    session: SessionId,
    plan_id: PlanId,
    plan: PlanGraph,
    spec: RequestSpec,
    source: ArtifactId,
}

impl Gateway {
    /// Opens the store and builds both registries. Must not be called from
    /// inside an async runtime: the HTTP client it creates is blocking.
    pub fn new(config: GatewayConfig) -> Result<Arc<Self>, GatewayError> {
        Self::with_backends(config, Arc::new(Backends::standard()))
    }

    pub fn with_backends(
        config: GatewayConfig,
        backends: Arc<Backends>,
    ) -> Result<Arc<Self>, GatewayError> {
        let store = Arc::new(match &config.cache_dir {
            Some(dir) => Store::open(dir)?,
            None => Store::in_memory(),
        });
        let cfg_err = |e: weave_core::RegistryError| GatewayError::Validation(e.to_string());
        let local_reg = match &config.tools {
            Some(t) => t.registry().map_err(cfg_err)?,
            None => Registry::builtin(),
        };
        let hosted_reg = match &config.hosted_url {
            Some(url) => Some(local_reg.to_hosted(url).map_err(cfg_err)?),
            None => None,
        };
        let mut config = config;
        if let Some(t) = &config.tools {
            config.thresholds = t.tiers.unwrap_or(config.thresholds);
            config.factors = t.cost_factors.unwrap_or(config.factors);
        }
        if config.mode == Mode::Hosted && hosted_reg.is_none() {
            return Err(GatewayError::Validation(
                "hosted mode needs a hosted backend URL".into(),
            ));
        }
        let exec = |reg: Registry| {
            Executor::new(
                store.clone(),
                Arc::new(reg),
                backends.clone(),
                config.executor,
            )
        };
        let local = exec(local_reg);
        let hosted = hosted_reg.map(exec);
        let tier = select_tier(&config.profile, config.tier_override, &config.thresholds);
        Ok(Arc::new(Self {
            tier,
            local,
            hosted,
            store,
            backends,
            config,
            sessions: Mutex::new(HashMap::new()),
            plans: RwLock::new(BTreeMap::new()),
        }))
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Tier for sessions without an override.
    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn backends(&self) -> &Arc<Backends> {
        &self.backends
    }

    fn executor(&self, mode: Mode) -> Result<&Executor, GatewayError> {
        match mode {
            Mode::Local => Ok(&self.local),
            Mode::Hosted => self.hosted.as_ref().ok_or_else(|| {
                GatewayError::Validation("hosted mode needs a hosted backend URL".into())
            }),
        }
    }

    pub fn registry(&self, mode: Mode) -> Result<&Registry, GatewayError> {
        Ok(self.executor(mode)?.registry())
    }

    pub fn tools(&self) -> Vec<ToolSpec> {
        self.executor(self.config.mode)
            .map(|e| e.registry().tools().cloned().collect())
            .unwrap_or_default()
    }

    pub fn create_session(
        &self,
        mode: Option<Mode>,
        tier: Option<Tier>,
    ) -> Result<weave_core::store::Session, GatewayError> {
        let mode = mode.unwrap_or(self.config.mode);
        self.executor(mode)?;
        let session = self.store.create_session(mode, tier)?;
        self.runtime(&session.id);
        Ok(session)
    }

    fn runtime(&self, id: &SessionId) -> Arc<Hub> {
        let mut sessions = self.sessions.lock();
        let rt = sessions.entry(id.clone()).or_insert_with(|| SessionRt {
            hub: Arc::new(Hub::new(self.config.event_buffer)),
            worker: None,
        });
        rt.hub.clone()
    }

    pub fn hub(&self, id: &SessionId) -> Result<Arc<Hub>, GatewayError> {
        self.store.session(id)?;
        Ok(self.runtime(id))
    }

    pub fn subscribe(&self, id: &SessionId) -> Result<Subscription, GatewayError> {
        Ok(self.hub(id)?.subscribe())
    }

    /// Plans the message and returns the job that executes it.
    pub fn prepare(
        self: &Arc<Self>,
        session_id: &SessionId,
        text: &str,
        attachments: &[Attachment],
    ) -> Result<(Accepted, Job), GatewayError> {
        let session = self.store.session(session_id)?;
        let medias: Vec<MediaType> = attachments.iter().map(|a| a.media).collect();
        let spec = derive_request_spec(text, &medias)?;
        let executor = self.executor(session.mode)?;

        let mut ids = Vec::with_capacity(attachments.len());
        for a in attachments {
            ids.push(self.store.put_artifact(&a.bytes, a.media, "user", &[])?);
        }
        let source = match ids.first() {
            Some(id) => id.clone(),
            None => self
                .store
                .put_artifact(text.as_bytes(), MediaType::TEXT, "user", &[])?,
        };
        let turn = self.store.append_turn(session_id, Role::User, text, &ids)?;

        let tier = session.tier_override.unwrap_or(self.tier);
        let graph = match plan(
            &spec,
            executor.registry(),
            tier,
            &self.config.profile,
            &self.config.factors,
        ) {
            Ok(g) => g,
            Err(e) => {
                let _ = self
                    .store
                    .append_turn(session_id, Role::System, &e.to_string(), &[]);
                return Err(e.into());
            }
        };
        let plan_id = PlanId::fresh();
        self.plans.write().insert(
            plan_id.clone(),
            PlanEntry {
                plan_id: plan_id.clone(),
                session_id: session_id.clone(),
                status: PlanStatus::Queued,
                plan: graph.clone(),
                report: None,
                error: None,
            },
        );
        let accepted = Accepted {
            session_id: session_id.clone(),
            turn_id: turn.id.0,
            plan_id: plan_id.clone(),
            tier,
            mode: session.mode,
            request: spec.clone(),
            plan: graph.clone(),
        };
        let job = Job {
            gateway: self.clone(),
            mode: session.mode,
            session: session_id.clone(),
            plan_id,
            plan: graph,
            spec,
            source,
        };
        Ok((accepted, job))
    }

    /// Plans the message and queues it behind earlier messages of the
    /// same session.
    pub fn submit(
        self: &Arc<Self>,
        session_id: &SessionId,
        text: &str,
        attachments: &[Attachment],
    ) -> Result<Accepted, GatewayError> {
        let (accepted, job) = self.prepare(session_id, text, attachments)?;
        let mut sessions = self.sessions.lock();
        let rt = sessions
            .entry(session_id.clone())
            .or_insert_with(|| SessionRt {
                hub: Arc::new(Hub::new(self.config.event_buffer)),
                worker: None,
            });
        let tx = rt.worker.get_or_insert_with(|| spawn_worker(session_id));
        tx.send(job)
            .map_err(|_| GatewayError::Internal("session worker has stopped".into()))?;
        Ok(accepted)
    }

    pub fn artifact(&self, id: &ArtifactId) -> Result<Artifact, GatewayError> {
        Ok(self.store.get_artifact(id)?)
    }

    pub fn plan_entry(&self, id: &PlanId) -> Result<PlanEntry, GatewayError> {
        self.plans
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| GatewayError::NotFound(format!("plan {id}")))
    }

    pub fn health(&self) -> Value {
        json!({
            "status": "ok",
            "mode": self.config.mode,
            "hosted": self.hosted.is_some(),
            "tier": self.tier,
            "profile": self.config.profile,
            "tools": self.tools().len(),
            "artifacts": self.store.stats().artifacts,
        })
    }

    fn set_status(&self, id: &PlanId, status: PlanStatus) {
        if let Some(e) = self.plans.write().get_mut(id) {
            e.status = status;
        }
    }
}

fn spawn_worker(session: &SessionId) -> mpsc::Sender<Job> {
    let (tx, rx) = mpsc::channel::<Job>();
    std::thread::Builder::new()
        .name(format!("session-{session}"))
        .spawn(move || {
            for job in rx {
                let _ = job.run(&weave_core::NullSink);
            }
        })
        .expect("spawn session worker");
    tx
}

struct Tee<'a>(&'a dyn EventSink, &'a dyn EventSink);

impl EventSink for Tee<'_> {
    fn emit(&self, event: ProgressEvent) {
        self.0.emit(event.clone());
        self.1.emit(event);
    }
}

impl Job {
    pub fn plan_id(&self) -> &PlanId {
        &self.plan_id
    }

    /// Executes the plan, publishing to the session's hub and to `extra`.
    pub fn run(self, extra: &dyn EventSink) -> Result<ExecutionReport, ExecError> {
        let gw = &self.gateway;
        let hub = gw.runtime(&self.session);
        gw.set_status(&self.plan_id, PlanStatus::Running);
        let executor = gw.executor(self.mode).expect("mode checked when planning");
        let result = executor.execute_plan(
            &self.plan_id,
            &self.plan,
            &self.spec,
            &self.session,
            &self.source,
            &Tee(&*hub, extra),
        );
        if let Some(e) = gw.plans.write().get_mut(&self.plan_id) {
            match &result {
                Ok(r) => {
                    e.status = PlanStatus::Done;
                    e.report = Some(r.clone());
                }
                Err(err) => {
                    e.status = PlanStatus::Failed;
                    e.error = Some(err.to_string());
                    if let ExecError::Failed { report, .. } = err {
                        e.report = Some((**report).clone());
                    }
                }
            }
        }
        if let Err(e) = &result {
            tracing::warn!(plan = %self.plan_id, "plan failed: {e}");
        }
        result
    }
}
