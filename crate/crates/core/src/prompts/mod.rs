//! Prompt managers: few-shot diagnosis, the staged supportive dialogue, and
//! tree-search treatment planning over a CBT module database, plus the
//! lexicon-based safety gate.

mod diagnose;
mod dialogue;
mod risk;
mod treatment;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llmclient::{ChatMessage, CompletionRequest, LlmError, Role};

pub use diagnose::{
    build_diagnose_prompt, default_exemplar_bank, load_exemplar_bank, parse_diagnosis, parse_exemplar_bank,
    render_exemplar_answer, render_exemplar_question, Answer, Diagnosis, DiagnosisLabel, Exemplar, CHOICES_LINE,
    DIAGNOSE_PREAMBLE, TASK_LINE,
};
pub use dialogue::{
    dialogue_examples, next_turn, parse_move, DialogueExample, DialogueOptions, DialogueState, DialogueWarning, Move,
    Speaker, Stage, Turn, TurnOutcome, CRISIS_MESSAGE, DIALOGUE_SCAFFOLD, SUPPORT_AFTER,
};
pub use risk::{assess_risk, RiskAssessor, RiskLevel};
pub use treatment::{
    default_cbt_db, default_cbt_embeddings, load_cbt_db, parse_cbt_db, parse_vote, plan_treatment, CbtNode, PlanConfig,
    PlanStep, TreatmentPlan,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("k = {k} exceeds the exemplar bank size {bank}")]
    KTooLarge { k: usize, bank: usize },
    #[error("no answer token in model output")]
    ParseError,
    #[error("user message is empty")]
    EmptyMessage,
    #[error("treatment database is empty")]
    EmptyDatabase,
    #[error("invalid resource: {0}")]
    InvalidResource(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
}

/// A rendered prompt: the system preamble followed by alternating turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    /// Starts with the system message.
    pub messages: Vec<ChatMessage>,
}

impl PromptBundle {
    pub fn new(system: impl Into<String>) -> Self {
        let system = system.into();
        Self { messages: vec![ChatMessage::system(system.clone())], system }
    }

    pub fn push(&mut self, role: Role, content: impl Into<String>) {
        self.messages.push(ChatMessage::new(role, content));
    }

    /// First message is the system prompt, no further system messages, and
    /// no two consecutive turns from the same role.
    pub fn is_well_formed(&self) -> bool {
        let Some(first) = self.messages.first() else { return false };
        first.role == Role::System
            && self.messages[1..].iter().all(|m| m.role != Role::System)
            && self.messages[1..].windows(2).all(|w| w[0].role != w[1].role)
    }

    /// Plain-text rendering used for golden files and logs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            out.push_str(&format!("<|{role}|>\n{}\n", m.content));
        }
        out
    }

    pub fn to_request(&self, model_id: &str, temperature: f64, max_tokens: u32) -> CompletionRequest {
        CompletionRequest {
            model_id: model_id.to_string(),
            messages: self.messages.clone(),
            temperature,
            max_tokens,
            seed: None,
        }
    }
}
