use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{PromptBundle, PromptError};
use crate::corpus::Label;
use crate::llmclient::Role;

pub const DIAGNOSE_PREAMBLE: &str = include_str!("../../resources/prompts/diagnose_preamble.txt");
pub const TASK_LINE: &str =
    "Task: Read and analyze posts to determine the presence of depressive symptoms as defined by DSM-5.";
pub const CHOICES_LINE: &str = "Choices: [A. Depressed B. Not Depressed]";

static EXEMPLARS_JSONL: &str = include_str!("../../resources/prompts/exemplars.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Answer {
    /// Depressed.
    A,
    /// Not depressed.
    B,
}

impl Answer {
    pub fn label(self) -> DiagnosisLabel {
        match self {
            Answer::A => DiagnosisLabel::Depressed,
            Answer::B => DiagnosisLabel::NotDepressed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub post: String,
    pub answer: Answer,
    pub explanation: String,
    pub keywords: Vec<String>,
}

impl Exemplar {
    /// Depressed exemplars need keywords; keywords must survive the
    /// comma-separated rendering.
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.answer == Answer::A && self.keywords.is_empty() {
            return Err(PromptError::InvalidResource("depressed exemplar without keywords".into()));
        }
        if let Some(k) = self.keywords.iter().find(|k| k.trim().is_empty() || k.contains([',', '\n']) || k.trim() != *k)
        {
            return Err(PromptError::InvalidResource(format!("keyword {k:?} cannot be rendered")));
        }
        if self.post.trim().is_empty() || self.explanation.contains('\n') {
            return Err(PromptError::InvalidResource("exemplar post is empty or explanation spans lines".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisLabel {
    Depressed,
    NotDepressed,
}

impl DiagnosisLabel {
    pub fn to_label(self) -> Label {
        Label::from_bool(self == DiagnosisLabel::Depressed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub label: DiagnosisLabel,
    pub explanation: String,
    pub keywords: Vec<String>,
    pub raw: String,
    /// No `Explanation:` field was found.
    pub explanation_missing: bool,
}

/// The user turn for one post: task, choices and the post text.
pub fn render_exemplar_question(post: &str) -> String {
    format!("{TASK_LINE}\n{CHOICES_LINE}\nPosts: {post}")
}

/// The assistant turn for one exemplar.
pub fn render_exemplar_answer(ex: &Exemplar) -> String {
    let keywords = ex.keywords.join(", ");
    let answer = match ex.answer {
        Answer::A => "A",
        Answer::B => "B",
    };
    let kw_line = if keywords.is_empty() { "Keywords:".to_string() } else { format!("Keywords: {keywords}") };
    format!("Answer: {answer}\nExplanation: {}\n{kw_line}", ex.explanation)
}

/// Preamble, the first `k` bank exemplars as user/assistant pairs, then the
/// target post with the answer left blank.
pub fn build_diagnose_prompt(post: &str, bank: &[Exemplar], k: usize) -> Result<PromptBundle, PromptError> {
    if k > bank.len() {
        return Err(PromptError::KTooLarge { k, bank: bank.len() });
    }
    let mut bundle = PromptBundle::new(DIAGNOSE_PREAMBLE.trim_end());
    for ex in &bank[..k] {
        bundle.push(Role::User, render_exemplar_question(&ex.post));
        bundle.push(Role::Assistant, render_exemplar_answer(ex));
    }
    bundle.push(Role::User, format!("{}\nAnswer:", render_exemplar_question(post)));
    Ok(bundle)
}

struct Grammar {
    answer: Regex,
    choice: Regex,
    bare: Regex,
    explanation: Regex,
    keywords: Regex,
}

fn grammar() -> &'static Grammar {
    static G: OnceLock<Grammar> = OnceLock::new();
    G.get_or_init(|| Grammar {
        answer: Regex::new(r"(?i)\banswer\s*[:\-]?\s*[\[(]?\s*([ab])\b").unwrap(),
        choice: Regex::new(r"(?i)\b([ab])\s*[.):]\s*(?:not\s+depressed|depressed)\b").unwrap(),
        bare: Regex::new(r"(?i)\banswer\s*[:\-]?\s*(not\s+depressed|depressed)\b").unwrap(),
        explanation: Regex::new(r"(?is)\bexplanation\s*:\s*(.*?)\s*(?:\bkeywords\s*:|\z)").unwrap(),
        keywords: Regex::new(r"(?is)\bkeywords\s*:(.*)\z").unwrap(),
    })
}

fn letter_label(s: &str) -> DiagnosisLabel {
    if s.eq_ignore_ascii_case("a") {
        DiagnosisLabel::Depressed
    } else {
        DiagnosisLabel::NotDepressed
    }
}

/// Parses a model reply. The answer may be written `Answer: A`,
/// `A. Depressed`, `B. Not Depressed` or `Answer: not depressed`, in any
/// case.
pub fn parse_diagnosis(text: &str) -> Result<Diagnosis, PromptError> {
    let g = grammar();
    let label = if let Some(c) = g.answer.captures(text) {
        letter_label(&c[1])
    } else if let Some(c) = g.choice.captures(text) {
        letter_label(&c[1])
    } else if let Some(c) = g.bare.captures(text) {
        if c[1].to_ascii_lowercase().starts_with("not") {
            DiagnosisLabel::NotDepressed
        } else {
            DiagnosisLabel::Depressed
        }
    } else {
        return Err(PromptError::ParseError);
    };
    let explanation = g.explanation.captures(text).map(|c| c[1].trim().to_string());
    let keywords = g
        .keywords
        .captures(text)
        .map(|c| c[1].split([',', '\n']).map(str::trim).filter(|k| !k.is_empty()).map(str::to_string).collect())
        .unwrap_or_default();
    Ok(Diagnosis {
        label,
        explanation_missing: explanation.is_none(),
        explanation: explanation.unwrap_or_default(),
        keywords,
        raw: text.to_string(),
    })
}

pub fn parse_exemplar_bank(text: &str) -> Result<Vec<Exemplar>, PromptError> {
    let mut bank = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: Exemplar = serde_json::from_str(line)
            .map_err(|e| PromptError::InvalidResource(format!("exemplar line {}: {e}", i + 1)))?;
        ex.validate()?;
        bank.push(ex);
    }
    Ok(bank)
}

pub fn load_exemplar_bank(path: impl AsRef<Path>) -> Result<Vec<Exemplar>, PromptError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| PromptError::InvalidResource(format!("{}: {e}", path.as_ref().display())))?;
    parse_exemplar_bank(&text)
}

/// The bundled exemplar bank.
pub fn default_exemplar_bank() -> Vec<Exemplar> {
    parse_exemplar_bank(EXEMPLARS_JSONL).expect("bundled exemplar bank is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled_answers(b: &PromptBundle) -> usize {
        b.messages.iter().filter(|m| m.content.starts_with("Answer: A") || m.content.starts_with("Answer: B")).count()
    }

    #[test]
    fn shot_counts() {
        let bank = default_exemplar_bank();
        let zero = build_diagnose_prompt("post", &bank, 0).unwrap();
        assert_eq!(zero.messages.len(), 2);
        assert_eq!(filled_answers(&zero), 0);
        assert_eq!(zero.system, DIAGNOSE_PREAMBLE.trim_end());
        let four = build_diagnose_prompt("post", &bank, 4).unwrap();
        assert_eq!(filled_answers(&four), 4);
        assert!(four.is_well_formed());
        assert_eq!(
            build_diagnose_prompt("post", &bank, bank.len() + 1),
            Err(PromptError::KTooLarge { k: bank.len() + 1, bank: bank.len() })
        );
        let mut prev = 0;
        for k in 0..=bank.len() {
            let len = build_diagnose_prompt("post", &bank, k).unwrap().render().len();
            assert!(len > prev);
            prev = len;
        }
    }

    #[test]
    fn parses_examples() {
        let d = parse_diagnosis("Answer: A\nExplanation: anhedonia per DSM-5.\nKeywords: hopeless, insomnia").unwrap();
        assert_eq!(d.label, DiagnosisLabel::Depressed);
        assert_eq!(d.explanation, "anhedonia per DSM-5.");
        assert_eq!(d.keywords, vec!["hopeless", "insomnia"]);
        assert!(!d.explanation_missing);

        let d = parse_diagnosis("answer: b. not depressed").unwrap();
        assert_eq!(d.label, DiagnosisLabel::NotDepressed);
        assert!(d.keywords.is_empty());
        assert!(d.explanation_missing);

        assert_eq!(parse_diagnosis("A. Depressed").unwrap().label, DiagnosisLabel::Depressed);
        assert_eq!(parse_diagnosis("B) Not Depressed").unwrap().label, DiagnosisLabel::NotDepressed);
        assert_eq!(parse_diagnosis("Answer: Not Depressed").unwrap().label, DiagnosisLabel::NotDepressed);
        assert_eq!(parse_diagnosis("I think maybe."), Err(PromptError::ParseError));
    }

    #[test]
    fn bank_round_trips_through_the_parser() {
        for ex in default_exemplar_bank() {
            let d = parse_diagnosis(&render_exemplar_answer(&ex)).unwrap();
            assert_eq!(d.label, ex.answer.label());
            assert_eq!(d.keywords, ex.keywords);
            assert_eq!(d.explanation, ex.explanation);
        }
    }

    #[test]
    fn invalid_exemplars() {
        let ex = Exemplar { post: "p".into(), answer: Answer::A, explanation: "e".into(), keywords: vec![] };
        assert!(ex.validate().is_err());
        let ex = Exemplar { keywords: vec!["a, b".into()], ..ex };
        assert!(ex.validate().is_err());
    }
}
