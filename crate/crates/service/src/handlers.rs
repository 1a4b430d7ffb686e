use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use chrono::Utc;
use lumen_core::explain::{explain, Explanation};
use lumen_core::prompts::{
    build_diagnose_prompt, next_turn, parse_diagnosis, plan_treatment, DiagnosisLabel, DialogueState, DialogueWarning,
    PromptError, RiskLevel, Speaker, Stage, TreatmentPlan, TurnOutcome,
};
use lumen_core::textprep::TokenDoc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{AppState, Engines, Record, ServiceError, Session};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Classifier,
    Llm,
    #[default]
    Both,
}

fn default_shots() -> usize {
    3
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnoseRequest {
    pub text: String,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default = "default_true")]
    pub explain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseResult {
    pub label: DiagnosisLabel,
    /// Classifier probability of the depressed class.
    pub p1: Option<f64>,
    pub explanation: String,
    pub keywords: Vec<String>,
    pub lime: Option<Explanation>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageResponse {
    pub reply: String,
    pub stage: Stage,
    pub risk: RiskLevel,
    pub plan: Option<TreatmentPlan>,
    pub warning: Option<DialogueWarning>,
    /// 1-based exchange number of this turn.
    pub turn: usize,
}

fn prompt_error(e: PromptError) -> ServiceError {
    match e {
        PromptError::EmptyMessage | PromptError::KTooLarge { .. } => ServiceError::BadRequest(e.to_string()),
        PromptError::Backend(e) => ServiceError::Backend(e.to_string()),
        PromptError::ParseError => ServiceError::Backend("unparseable model output".into()),
        other => ServiceError::Internal(other.to_string()),
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ServiceError::Internal(e.to_string()))?
}

pub async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

impl Engines {
    /// Runs the requested diagnosis paths. The classifier path needs a
    /// loaded model; the LLM path needs `shots` within the exemplar bank.
    pub fn diagnose(&self, req: &DiagnoseRequest) -> Result<DiagnoseResult, ServiceError> {
        if req.text.trim().is_empty() {
            return Err(ServiceError::BadRequest("text is empty".into()));
        }
        let use_classifier = req.engine != Engine::Llm;
        let use_llm = req.engine != Engine::Classifier;
        let classifier = match (use_classifier, &self.classifier) {
            (true, None) => return Err(ServiceError::ModelNotLoaded),
            (true, Some(c)) => Some(c),
            (false, _) => None,
        };
        if use_llm && req.shots > self.exemplars.len() {
            return Err(ServiceError::BadRequest(format!(
                "shots = {} exceeds the exemplar bank size {}",
                req.shots,
                self.exemplars.len()
            )));
        }

        let classifier_out = match classifier {
            Some(clf) => {
                let doc = clf.tokenize(&req.text);
                let pred = clf.predict_doc(&doc).map_err(|e| ServiceError::Internal(e.to_string()))?;
                let lime = if req.explain && !doc.is_empty() {
                    let p1_of = |d: &TokenDoc| clf.predict_doc(d).map(|p| p.p1);
                    Some(explain(p1_of, &doc, &self.lime).map_err(|e| ServiceError::Internal(e.to_string()))?)
                } else {
                    None
                };
                let label =
                    if pred.label.is_positive() { DiagnosisLabel::Depressed } else { DiagnosisLabel::NotDepressed };
                Some((label, pred.p1, lime))
            }
            None => None,
        };

        let llm_out = if use_llm {
            let bundle = build_diagnose_prompt(&req.text, &self.exemplars, req.shots).map_err(prompt_error)?;
            let d = &self.dialogue;
            let resp = self
                .llm
                .complete(&bundle.to_request(&d.model_id, d.temperature, d.max_tokens))
                .map_err(|e| ServiceError::Backend(e.to_string()))?;
            Some(parse_diagnosis(&resp.content).map_err(prompt_error)?)
        } else {
            None
        };

        let mut warnings = Vec::new();
        if llm_out.as_ref().is_some_and(|l| l.explanation_missing) {
            warnings.push("model output had no explanation".to_string());
        }
        if let (Some((label, ..)), Some(l)) = (&classifier_out, &llm_out) {
            if *label != l.label {
                warnings.push(format!("classifier and LLM disagree: classifier {label:?}, LLM {:?}", l.label));
            }
        }
        let label =
            classifier_out.as_ref().map(|c| c.0).or(llm_out.as_ref().map(|l| l.label)).expect("at least one path ran");
        let (explanation, keywords) = llm_out.map(|l| (l.explanation, l.keywords)).unwrap_or_default();
        let (p1, lime) = classifier_out.map(|(_, p1, lime)| (Some(p1), lime)).unwrap_or((None, None));
        Ok(DiagnoseResult { label, p1, explanation, keywords, lime, warnings })
    }

    /// One dialogue turn. When the turn reaches the support stage and no
    /// plan exists yet, a treatment plan is built from the conversation.
    pub fn chat_step(
        &self,
        prev: &DialogueState,
        needs_plan: bool,
        text: &str,
    ) -> Result<(TurnOutcome, Option<TreatmentPlan>), ServiceError> {
        let out = next_turn(prev, text, self.llm.as_ref(), &self.dialogue).map_err(prompt_error)?;
        let plan = if needs_plan && out.state.stage == Stage::Support && out.state.risk != RiskLevel::Crisis {
            let summary = case_summary(&out.state);
            Some(
                plan_treatment(&summary, &self.cbt_db, &self.planner, &self.plan_table, Some(self.llm.as_ref()))
                    .map_err(prompt_error)?,
            )
        } else {
            None
        };
        Ok((out, plan))
    }
}

pub async fn diagnose(
    State(state): State<Arc<AppState>>,
    Json(req): Json<DiagnoseRequest>,
) -> Result<Json<DiagnoseResult>, ServiceError> {
    Ok(Json(blocking(move || state.engines.diagnose(&req)).await?))
}

pub async fn create_session(State(state): State<Arc<AppState>>) -> Result<(StatusCode, Json<Value>), ServiceError> {
    let id = uuid::Uuid::new_v4().to_string();
    let at = Utc::now();
    state
        .journal
        .append(&id, &[Record::Created { session_id: id.clone(), at }])
        .map_err(|e| ServiceError::Journal(e.to_string()))?;
    state.insert(Session::new(id.clone(), at));
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

pub async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<Session>, ServiceError> {
    let slot = state.slot(&id)?;
    let session = slot.lock().await.clone();
    Ok(Json(session))
}

/// What the planner sees: every user turn, then the latest assistant
/// reflection as an appendix.
pub fn case_summary(state: &DialogueState) -> String {
    let user: Vec<&str> =
        state.history.iter().filter(|t| t.speaker == Speaker::User).map(|t| t.text.as_str()).collect();
    let mut out = user.join("\n");
    if let Some(r) = state.latest_reflection() {
        out.push_str("\n\nLatest reflection: ");
        out.push_str(r);
    }
    out
}

pub async fn post_message(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<MessageRequest>,
) -> Result<Json<MessageResponse>, ServiceError> {
    let slot = state.slot(&id)?;
    let mut session = slot.try_lock_owned().map_err(|_| ServiceError::SessionBusy(id.clone()))?;
    if req.text.trim().is_empty() {
        return Err(ServiceError::BadRequest("text is empty".into()));
    }
    let st = state.clone();
    let prev = session.state.clone();
    let needs_plan = session.plan.is_none();
    let text = req.text.clone();
    let (outcome, plan) = blocking(move || st.engines.chat_step(&prev, needs_plan, &text)).await?;

    let at = Utc::now().max(session.updated_at);
    let turn = outcome.state.exchanges();
    let mut records = vec![Record::Exchange {
        index: turn,
        user: req.text,
        reply: outcome.reply.clone(),
        stage: outcome.state.stage,
        risk: outcome.state.risk,
        at,
    }];
    if let Some(plan) = &plan {
        records.push(Record::Plan { plan: plan.clone(), at });
    }
    state.journal.append(&id, &records).map_err(|e| ServiceError::Journal(e.to_string()))?;

    session.state = outcome.state;
    session.updated_at = at;
    if plan.is_some() {
        session.plan = plan;
    }
    Ok(Json(MessageResponse {
        reply: outcome.reply,
        stage: session.state.stage,
        risk: session.state.risk,
        plan: session.plan.clone(),
        warning: outcome.warning,
        turn,
    }))
}
