//! HTTP API over the classifier, explainer and prompt managers.
//!
//! Endpoints: `GET /healthz`, `POST /v1/diagnose`, `POST /v1/sessions`,
//! `POST /v1/sessions/{id}/messages` and `GET /v1/sessions/{id}`. Chat
//! sessions are persisted in a per-session JSONL journal and restored on
//! start-up.

mod config;
mod error;
mod handlers;
pub mod journal;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use axum::http::{HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use lumen_core::classify::Checkpoint;
use lumen_core::explain::LimeConfig;
use lumen_core::llmclient::LlmBackend;
use lumen_core::pipeline::TextClassifier;
use lumen_core::prompts::{
    default_cbt_db, default_cbt_embeddings, default_exemplar_bank, load_cbt_db, load_exemplar_bank, CbtNode,
    DialogueOptions, Exemplar, PlanConfig,
};
use lumen_core::textprep::{load_embeddings, EmbeddingTable};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use config::ServiceConfig;
pub use error::ServiceError;
pub use handlers::{case_summary, DiagnoseRequest, DiagnoseResult, Engine, MessageRequest, MessageResponse};
pub use journal::{Journal, Record, Session};

type SessionSlot = Arc<tokio::sync::Mutex<Session>>;

/// Models, prompt resources and backend shared by every request. Usable
/// without the HTTP layer.
pub struct Engines {
    pub classifier: Option<Arc<TextClassifier>>,
    pub llm: Arc<dyn LlmBackend>,
    pub exemplars: Arc<Vec<Exemplar>>,
    pub cbt_db: Arc<Vec<CbtNode>>,
    pub plan_table: Arc<EmbeddingTable>,
    pub dialogue: DialogueOptions,
    pub planner: PlanConfig,
    pub lime: LimeConfig,
}

impl Engines {
    /// Bundled prompt resources and default options.
    pub fn new(classifier: Option<TextClassifier>, llm: Arc<dyn LlmBackend>) -> Self {
        Self {
            classifier: classifier.map(Arc::new),
            llm,
            exemplars: Arc::new(default_exemplar_bank()),
            cbt_db: Arc::new(default_cbt_db()),
            plan_table: Arc::new(default_cbt_embeddings()),
            dialogue: DialogueOptions::default(),
            planner: PlanConfig::default(),
            lime: ServiceConfig::default().lime,
        }
    }

    /// Loads everything named in `cfg` except the journal. The backend's
    /// model id is used for dialogue and planner requests.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let cfg_err = |e: &dyn std::fmt::Display| ServiceError::Config(e.to_string());
        let llm = cfg.backend.build().map_err(|e| cfg_err(&e))?;
        let embeddings = match &cfg.embeddings_path {
            Some(p) => Some(Arc::new(load_embeddings(p).map_err(|e| cfg_err(&e))?)),
            None => None,
        };
        let classifier = match &cfg.model_checkpoint_path {
            Some(p) => {
                let ck = Checkpoint::load(p).map_err(|e| cfg_err(&e))?;
                Some(TextClassifier::from_checkpoint(&ck, embeddings).map_err(|e| cfg_err(&e))?)
            }
            None => None,
        };
        let mut engines = Self::new(classifier, llm);
        if let Some(p) = &cfg.exemplar_bank_path {
            engines.exemplars = Arc::new(load_exemplar_bank(p).map_err(|e| cfg_err(&e))?);
        }
        if let Some(p) = &cfg.cbt_db_path {
            engines.cbt_db = Arc::new(load_cbt_db(p).map_err(|e| cfg_err(&e))?);
        }
        if let Some(p) = &cfg.cbt_embeddings_path {
            engines.plan_table = Arc::new(load_embeddings(p).map_err(|e| cfg_err(&e))?);
        }
        engines.dialogue = DialogueOptions { model_id: cfg.backend.model_id.clone(), ..cfg.dialogue.clone() };
        engines.planner = PlanConfig { model_id: cfg.backend.model_id.clone(), ..cfg.planner.clone() };
        engines.lime = cfg.lime;
        Ok(engines)
    }
}

/// [`Engines`] plus the journal and the session table.
pub struct AppState {
    pub engines: Engines,
    journal: Journal,
    sessions: RwLock<HashMap<String, SessionSlot>>,
}

impl AppState {
    /// Opens (and replays) the journal in `journal_dir`.
    pub fn with_engines(engines: Engines, journal_dir: impl Into<std::path::PathBuf>) -> Result<Self, ServiceError> {
        let journal = Journal::open(journal_dir).map_err(|e| ServiceError::Journal(e.to_string()))?;
        let state = Self { engines, journal, sessions: RwLock::new(HashMap::new()) };
        state.restore()?;
        Ok(state)
    }

    /// Bundled resources, the given classifier and backend.
    pub fn new(
        classifier: Option<TextClassifier>,
        llm: Arc<dyn LlmBackend>,
        journal_dir: impl Into<std::path::PathBuf>,
    ) -> Result<Self, ServiceError> {
        Self::with_engines(Engines::new(classifier, llm), journal_dir)
    }

    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        Self::with_engines(Engines::from_config(cfg)?, &cfg.journal_dir)
    }

    fn restore(&self) -> Result<(), ServiceError> {
        let (sessions, skipped) = self.journal.replay().map_err(|e| ServiceError::Journal(e.to_string()))?;
        if skipped > 0 {
            tracing::warn!(skipped, "journal replay skipped lines");
        }
        let mut table = self.sessions.write().expect("session table poisoned");
        for s in sessions {
            table.insert(s.id.clone(), Arc::new(tokio::sync::Mutex::new(s)));
        }
        Ok(())
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session table poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn slot(&self, id: &str) -> Result<SessionSlot, ServiceError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn insert(&self, session: Session) {
        self.sessions
            .write()
            .expect("session table poisoned")
            .insert(session.id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    }
}

/// The API router. `cors_origin` of `None` allows any origin.
pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Result<Router, ServiceError> {
    let origin = match cors_origin {
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).map_err(|e| ServiceError::Config(e.to_string()))?),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([axum::http::header::CONTENT_TYPE]);
    Ok(Router::new()
        .route("/healthz", get(handlers::healthz))
        .route("/v1/diagnose", post(handlers::diagnose))
        .route("/v1/sessions", post(handlers::create_session))
        .route("/v1/sessions/{id}", get(handlers::get_session))
        .route("/v1/sessions/{id}/messages", post(handlers::post_message))
        .layer(cors)
        .with_state(state))
}

/// Loads the configuration and serves until the process is stopped.
pub async fn serve(cfg: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::from_config(&cfg)?);
    tracing::info!(sessions = state.session_ids().len(), "restored sessions from journal");
    let app = router(state, cfg.cors_origin.as_deref())?;
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", cfg.port))
        .await
        .map_err(|e| ServiceError::Config(format!("bind port {}: {e}", cfg.port)))?;
    tracing::info!(port = cfg.port, "listening");
    axum::serve(listener, app).await.map_err(|e| ServiceError::Internal(e.to_string()))
}
