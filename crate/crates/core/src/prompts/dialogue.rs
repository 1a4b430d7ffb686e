use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{PromptBundle, PromptError, RiskLevel};
use crate::llmclient::{LlmBackend, Role};

pub const DIALOGUE_SCAFFOLD: &str = include_str!("../../resources/prompts/dialogue_scaffold.txt");
pub const CRISIS_MESSAGE: &str = include_str!("../../resources/prompts/crisis_message.txt");
/// Number of user exchanges after which the dialogue moves to support.
pub const SUPPORT_AFTER: usize = 6;

static EXAMPLES_JSON: &str = include_str!("../../resources/prompts/dialogue_examples.json");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[default]
    Understand,
    Relate,
    Clarify,
    Reflect,
    Support,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Clarify,
    ParaphraseReflect,
}

impl Move {
    pub fn tag(self) -> &'static str {
        match self {
            Move::Clarify => "[clarify]",
            Move::ParaphraseReflect => "[paraphrase_reflect]",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueExample {
    #[serde(rename = "move")]
    pub demonstrates: Move,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueState {
    pub stage: Stage,
    pub history: Vec<Turn>,
    pub risk: RiskLevel,
    /// Earlier explanation of the person's mental state, e.g. a diagnosis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl DialogueState {
    pub fn with_context(context: impl Into<String>) -> Self {
        Self { context: Some(context.into()), ..Self::default() }
    }

    pub fn exchanges(&self) -> usize {
        self.history.iter().filter(|t| t.speaker == Speaker::User).count()
    }

    /// Latest assistant turn that was not the crisis message.
    pub fn latest_reflection(&self) -> Option<&str> {
        self.history
            .iter()
            .rev()
            .find(|t| t.speaker == Speaker::Assistant && t.text != CRISIS_MESSAGE.trim_end())
            .map(|t| t.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueOptions {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DialogueOptions {
    fn default() -> Self {
        Self { model_id: "gpt-4".into(), temperature: 0.0, max_tokens: 512 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogueWarning {
    /// The reply carried no move tag; the stage was left unchanged.
    UntaggedMove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub reply: String,
    pub state: DialogueState,
    pub warning: Option<DialogueWarning>,
    pub llm_called: bool,
    #[serde(rename = "move")]
    pub chosen_move: Option<Move>,
}

/// The bundled few-shot dialogues, one per move.
pub fn dialogue_examples() -> &'static [DialogueExample] {
    static EXAMPLES: OnceLock<Vec<DialogueExample>> = OnceLock::new();
    EXAMPLES.get_or_init(|| serde_json::from_str(EXAMPLES_JSON).expect("bundled dialogue examples are valid"))
}

/// Splits a leading move tag off a reply. Returns the move, if any, and the
/// reply text without the tag.
pub fn parse_move(reply: &str) -> (Option<Move>, String) {
    static TAG: OnceLock<Regex> = OnceLock::new();
    let tag = TAG.get_or_init(|| Regex::new(r"(?i)^\s*\[\s*(clarify|paraphrase[_\- ]reflect)\s*\]\s*").unwrap());
    match tag.captures(reply) {
        Some(c) => {
            let mv = if c[1].eq_ignore_ascii_case("clarify") { Move::Clarify } else { Move::ParaphraseReflect };
            (Some(mv), reply[c.get(0).unwrap().end()..].trim_end().to_string())
        }
        None => (None, reply.trim().to_string()),
    }
}

fn speaker_label(s: Speaker) -> &'static str {
    match s {
        Speaker::User => "User",
        Speaker::Assistant => "Assistant",
    }
}

fn system_prompt(state: &DialogueState, risk: RiskLevel) -> String {
    let mut out = DIALOGUE_SCAFFOLD.trim_end().to_string();
    for ex in dialogue_examples() {
        out.push_str(&format!("\n\nExample of the {} move:", ex.demonstrates.tag()));
        for t in &ex.turns {
            out.push_str(&format!("\n{}: {}", speaker_label(t.speaker), t.text));
        }
    }
    if let Some(ctx) = &state.context {
        out.push_str(&format!("\n\nEarlier explanation of their mental state: {ctx}"));
    }
    if risk == RiskLevel::Elevated {
        out.push_str("\n\nThe person may be at elevated risk. Gently check on their safety.");
    }
    out
}

fn next_stage(current: Stage, exchanges: usize, mv: Option<Move>) -> Stage {
    if current == Stage::Support || exchanges >= SUPPORT_AFTER {
        return Stage::Support;
    }
    match mv {
        None => current,
        Some(_) if exchanges == 1 => Stage::Relate,
        Some(Move::Clarify) => Stage::Clarify,
        Some(Move::ParaphraseReflect) => Stage::Reflect,
    }
}

/// Advances the dialogue by one user message. The safety gate runs first;
/// once a crisis is detected every later turn returns the crisis message
/// without calling the backend.
pub fn next_turn(
    state: &DialogueState,
    user_msg: &str,
    llm: &dyn LlmBackend,
    opts: &DialogueOptions,
) -> Result<TurnOutcome, PromptError> {
    if user_msg.trim().is_empty() {
        return Err(PromptError::EmptyMessage);
    }
    let risk = state.risk.max(super::assess_risk(user_msg));
    let mut next = state.clone();
    next.risk = risk;
    if risk == RiskLevel::Crisis {
        let reply = CRISIS_MESSAGE.trim_end().to_string();
        next.history.push(Turn { speaker: Speaker::User, text: user_msg.to_string() });
        next.history.push(Turn { speaker: Speaker::Assistant, text: reply.clone() });
        return Ok(TurnOutcome { reply, state: next, warning: None, llm_called: false, chosen_move: None });
    }

    let mut bundle = PromptBundle::new(system_prompt(state, risk));
    for t in &state.history {
        let role = match t.speaker {
            Speaker::User => Role::User,
            Speaker::Assistant => Role::Assistant,
        };
        bundle.push(role, t.text.clone());
    }
    bundle.push(Role::User, user_msg);
    let resp = llm.complete(&bundle.to_request(&opts.model_id, opts.temperature, opts.max_tokens))?;
    let (mv, reply) = parse_move(&resp.content);

    next.history.push(Turn { speaker: Speaker::User, text: user_msg.to_string() });
    next.history.push(Turn { speaker: Speaker::Assistant, text: reply.clone() });
    next.stage = next_stage(state.stage, next.exchanges(), mv);
    let warning = mv.is_none().then_some(DialogueWarning::UntaggedMove);
    if warning.is_some() {
        tracing::warn!("dialogue reply carried no move tag; stage unchanged");
    }
    Ok(TurnOutcome { reply, state: next, warning, llm_called: true, chosen_move: mv })
}
