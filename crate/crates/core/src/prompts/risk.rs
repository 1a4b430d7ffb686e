use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::textprep::{preprocess, PreprocessConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLevel {
    #[default]
    None,
    Elevated,
    Crisis,
}

static CRISIS_TXT: &str = include_str!("../../resources/prompts/crisis_lexicon.txt");
static ELEVATED_TXT: &str = include_str!("../../resources/prompts/elevated_lexicon.txt");

/// Phrase lexicons compared after the default preprocessing (stop words
/// removed, stemming on). A phrase matches when its token sequence occurs
/// contiguously in the text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskAssessor {
    crisis: Vec<Vec<String>>,
    elevated: Vec<Vec<String>>,
}

fn parse_lexicon(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| preprocess(l, PreprocessConfig::default()).tokens)
        .filter(|t| !t.is_empty())
        .collect()
}

fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    tokens.windows(phrase.len()).any(|w| w == phrase)
}

impl RiskAssessor {
    pub fn from_lexicons(crisis: &str, elevated: &str) -> Self {
        Self { crisis: parse_lexicon(crisis), elevated: parse_lexicon(elevated) }
    }

    /// The bundled lexicons.
    pub fn bundled() -> &'static Self {
        static BUNDLED: OnceLock<RiskAssessor> = OnceLock::new();
        BUNDLED.get_or_init(|| Self::from_lexicons(CRISIS_TXT, ELEVATED_TXT))
    }

    pub fn assess(&self, text: &str) -> RiskLevel {
        let tokens = preprocess(text, PreprocessConfig::default()).tokens;
        if self.crisis.iter().any(|p| contains_phrase(&tokens, p)) {
            RiskLevel::Crisis
        } else if self.elevated.iter().any(|p| contains_phrase(&tokens, p)) {
            RiskLevel::Elevated
        } else {
            RiskLevel::None
        }
    }
}

/// [`RiskAssessor::assess`] with the bundled lexicons.
pub fn assess_risk(text: &str) -> RiskLevel {
    RiskAssessor::bundled().assess(text)
}
