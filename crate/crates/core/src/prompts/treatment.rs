use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{PromptBundle, PromptError};
use crate::llmclient::{LlmBackend, Role};
use crate::metrics::response_similarity;
use crate::textprep::EmbeddingTable;

static CBT_DB_JSON: &str = include_str!("../../resources/prompts/cbt_db.json");
static CBT_EMBEDDINGS: &str = include_str!("../../resources/prompts/cbt_embeddings.txt");

/// One CBT module of the treatment database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CbtNode {
    pub name: String,
    pub objective: String,
    pub techniques: Vec<String>,
    pub application: String,
    pub prompt_example: String,
    pub key_steps: Vec<String>,
    /// Content written for this database rather than taken from a source.
    #[serde(default)]
    pub authored_in_repo: bool,
}

impl CbtNode {
    pub fn validate(&self) -> Result<(), PromptError> {
        let empty_text =
            [&self.name, &self.objective, &self.application, &self.prompt_example].iter().any(|s| s.trim().is_empty());
        let empty_list =
            [&self.techniques, &self.key_steps].iter().any(|l| l.is_empty() || l.iter().any(|s| s.trim().is_empty()));
        if empty_text || empty_list {
            return Err(PromptError::InvalidResource(format!("CBT node {:?} has an empty field", self.name)));
        }
        Ok(())
    }
}

pub fn parse_cbt_db(text: &str) -> Result<Vec<CbtNode>, PromptError> {
    let db: Vec<CbtNode> =
        serde_json::from_str(text).map_err(|e| PromptError::InvalidResource(format!("CBT database: {e}")))?;
    for node in &db {
        node.validate()?;
    }
    for (i, node) in db.iter().enumerate() {
        if db[..i].iter().any(|n| n.name == node.name) {
            return Err(PromptError::InvalidResource(format!("duplicate CBT node {:?}", node.name)));
        }
    }
    Ok(db)
}

pub fn load_cbt_db(path: impl AsRef<Path>) -> Result<Vec<CbtNode>, PromptError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| PromptError::InvalidResource(format!("{}: {e}", path.as_ref().display())))?;
    parse_cbt_db(&text)
}

/// The bundled six-module database.
pub fn default_cbt_db() -> Vec<CbtNode> {
    parse_cbt_db(CBT_DB_JSON).expect("bundled CBT database is valid")
}

/// Small embedding table covering the vocabulary of the bundled database.
pub fn default_cbt_embeddings() -> EmbeddingTable {
    EmbeddingTable::parse(CBT_EMBEDDINGS).expect("bundled CBT embeddings are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub beam: usize,
    pub depth: usize,
    /// Weight of the similarity term.
    pub alpha: f64,
    /// Weight of the LLM vote term.
    pub beta: f64,
    pub model_id: String,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { beam: 3, depth: 3, alpha: 1.0, beta: 1.0, model_id: "gpt-4".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub node: String,
    pub rationale: String,
    /// The node's example prompt, offered as the next thing to ask.
    pub prompt: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentPlan {
    pub steps: Vec<PlanStep>,
    pub depth: usize,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Reads `Vote: N` (0 to 10) from a model reply, clamped to the scale.
pub fn parse_vote(text: &str) -> Option<f64> {
    static VOTE: OnceLock<Regex> = OnceLock::new();
    let re = VOTE.get_or_init(|| Regex::new(r"(?i)\bvote\s*[:=]?\s*(-?\d+(?:\.\d+)?)").unwrap());
    re.captures(text).and_then(|c| c[1].parse::<f64>().ok()).map(|v| v.clamp(0.0, 10.0))
}

fn vote_prompt(case_summary: &str, prefix: &[&CbtNode], node: &CbtNode) -> PromptBundle {
    let mut b = PromptBundle::new(
        "You are helping sequence cognitive behavioral therapy modules for a treatment plan. \
         Rate how well the candidate module fits as the next step for this case.",
    );
    let so_far = if prefix.is_empty() {
        "(none)".to_string()
    } else {
        prefix.iter().map(|n| n.name.as_str()).collect::<Vec<_>>().join(" -> ")
    };
    b.push(
        Role::User,
        format!(
            "Case: {case_summary}\nPlan so far: {so_far}\nCandidate module: {}\nObjective: {}\nApplication: {}\n\
             Reply with a single line of the form \"Vote: N\" where N is an integer from 0 to 10.",
            node.name, node.objective, node.application
        ),
    );
    b
}

struct Scored {
    sim: f64,
    vote: Option<f64>,
    score: f64,
}

struct Beam {
    path: Vec<usize>,
    steps: Vec<Scored>,
    total: f64,
}

/// Beam search over orderings of unused database nodes. A node's score is
/// `(alpha * (sim + 1) / 2 + beta * vote / 10) / (alpha + beta)` when the
/// backend votes, and the similarity term alone otherwise, so every score
/// lies in [0, 1]. Sequences are ranked by total score; ties keep the
/// earlier beam and database order.
pub fn plan_treatment(
    case_summary: &str,
    db: &[CbtNode],
    cfg: &PlanConfig,
    table: &EmbeddingTable,
    llm: Option<&dyn LlmBackend>,
) -> Result<TreatmentPlan, PromptError> {
    if db.is_empty() {
        return Err(PromptError::EmptyDatabase);
    }
    if cfg.beam == 0 || cfg.depth == 0 {
        return Err(PromptError::InvalidConfig("beam and depth must be at least 1".into()));
    }
    if !(cfg.alpha >= 0.0 && cfg.beta >= 0.0) || cfg.alpha + cfg.beta <= 0.0 {
        return Err(PromptError::InvalidConfig("alpha and beta must be non-negative and not both zero".into()));
    }
    let voter = llm.filter(|_| cfg.beta > 0.0);
    if voter.is_none() && cfg.alpha <= 0.0 {
        return Err(PromptError::InvalidConfig("alpha is zero and no backend votes".into()));
    }
    let sims: Vec<f64> = db.iter().map(|n| response_similarity(case_summary, &n.application, table)).collect();
    let mut warnings = Vec::new();
    let depth = cfg.depth.min(db.len());
    let mut beams = vec![Beam { path: Vec::new(), steps: Vec::new(), total: 0.0 }];
    for _ in 0..depth {
        let mut next = Vec::new();
        for beam in &beams {
            for (i, node) in db.iter().enumerate() {
                if beam.path.contains(&i) {
                    continue;
                }
                let sim_term = (sims[i] + 1.0) / 2.0;
                let (vote, score) = match voter {
                    Some(llm) => {
                        let prefix: Vec<&CbtNode> = beam.path.iter().map(|&j| &db[j]).collect();
                        let req = vote_prompt(case_summary, &prefix, node).to_request(&cfg.model_id, 0.0, 16);
                        let reply = llm.complete(&req)?.content;
                        let vote = parse_vote(&reply).unwrap_or_else(|| {
                            warnings.push(format!("unparseable vote for {:?}: {reply:?}", node.name));
                            0.0
                        });
                        (Some(vote), (cfg.alpha * sim_term + cfg.beta * vote / 10.0) / (cfg.alpha + cfg.beta))
                    }
                    None => (None, sim_term),
                };
                let mut path = beam.path.clone();
                path.push(i);
                let mut steps: Vec<Scored> =
                    beam.steps.iter().map(|s| Scored { sim: s.sim, vote: s.vote, score: s.score }).collect();
                steps.push(Scored { sim: sims[i], vote, score });
                next.push(Beam { path, steps, total: beam.total + score });
            }
        }
        // stable sort keeps generation order on ties
        next.sort_by(|a, b| b.total.total_cmp(&a.total));
        next.truncate(cfg.beam);
        beams = next;
    }
    let best = beams.into_iter().next().expect("at least one candidate per level");
    let steps: Vec<PlanStep> = best
        .path
        .iter()
        .zip(&best.steps)
        .map(|(&i, s)| {
            let node = &db[i];
            let vote = s.vote.map(|v| format!(", vote {v}/10")).unwrap_or_default();
            PlanStep {
                node: node.name.clone(),
                rationale: format!("similarity {:.3} to the case{vote}. {}", s.sim, node.objective),
                prompt: node.prompt_example.clone(),
                score: s.score,
            }
        })
        .collect();
    let scores = steps.iter().map(|s| s.score).collect();
    Ok(TreatmentPlan { steps, depth, scores, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmclient::{MockBackend, ScriptEntry, Unmatched};

    const INACTIVE: &str = "stopped doing activities I enjoy, stay in bed all day";

    fn no_llm(depth: usize, beam: usize) -> PlanConfig {
        PlanConfig { depth, beam, beta: 0.0, ..PlanConfig::default() }
    }

    #[test]
    fn bundled_db_is_complete() {
        let db = default_cbt_db();
        assert_eq!(db.len(), 6);
        for name in ["Cognitive Restructuring", "Behavioral Activation"] {
            assert!(!db.iter().find(|n| n.name == name).unwrap().authored_in_repo);
        }
    }

    #[test]
    fn inactivity_case_starts_with_behavioral_activation() {
        let plan = plan_treatment(INACTIVE, &default_cbt_db(), &no_llm(3, 3), &default_cbt_embeddings(), None).unwrap();
        assert_eq!(plan.steps[0].node, "Behavioral Activation");
        assert_eq!(plan.steps.len(), 3);
        assert!(plan.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn depth_one_is_argmax() {
        let db = default_cbt_db();
        let table = default_cbt_embeddings();
        let plan = plan_treatment(INACTIVE, &db, &no_llm(1, 1), &table, None).unwrap();
        let sims: Vec<f64> = db.iter().map(|n| response_similarity(INACTIVE, &n.application, &table)).collect();
        let best = (0..db.len()).fold(0, |b, i| if sims[i] > sims[b] { i } else { b });
        assert_eq!(plan.steps.len(), 1);
        assert_eq!(plan.steps[0].node, db[best].name);
    }

    #[test]
    fn ties_go_to_database_order() {
        let mut db = default_cbt_db();
        let mut twin = db[3].clone();
        twin.name = "Twin".into();
        db.insert(0, twin);
        let plan = plan_treatment(INACTIVE, &db, &no_llm(1, 2), &default_cbt_embeddings(), None).unwrap();
        assert_eq!(plan.steps[0].node, "Twin");
    }

    #[test]
    fn votes_change_ranking_and_no_node_repeats() {
        let db = default_cbt_db();
        let llm = MockBackend::new(
            vec![ScriptEntry::contains("Candidate module: Relaxation Techniques", "Vote: 10")],
            Unmatched::Default("Vote: 0".into()),
        );
        let cfg = PlanConfig { depth: 6, beam: 2, ..PlanConfig::default() };
        let plan = plan_treatment(INACTIVE, &db, &cfg, &default_cbt_embeddings(), Some(&llm)).unwrap();
        assert_eq!(plan.steps[0].node, "Relaxation Techniques");
        let mut names: Vec<&str> = plan.steps.iter().map(|s| s.node.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 6);
        let again = plan_treatment(INACTIVE, &db, &cfg, &default_cbt_embeddings(), Some(&llm)).unwrap();
        assert_eq!(plan, again);
    }

    #[test]
    fn zero_beta_ignores_backend() {
        let llm = MockBackend::sequence(Vec::<String>::new());
        let db = default_cbt_db();
        let table = default_cbt_embeddings();
        let with = plan_treatment(INACTIVE, &db, &no_llm(3, 2), &table, Some(&llm)).unwrap();
        let without = plan_treatment(INACTIVE, &db, &no_llm(3, 2), &table, None).unwrap();
        assert_eq!(with, without);
        assert_eq!(llm.call_count(), 0);
    }

    #[test]
    fn unparseable_vote_warns() {
        let llm = MockBackend::new(vec![], Unmatched::Default("sounds good".into()));
        let cfg = PlanConfig { depth: 1, beam: 1, ..PlanConfig::default() };
        let plan = plan_treatment(INACTIVE, &default_cbt_db(), &cfg, &default_cbt_embeddings(), Some(&llm)).unwrap();
        assert_eq!(plan.warnings.len(), 6);
    }

    #[test]
    fn errors() {
        let table = default_cbt_embeddings();
        assert_eq!(plan_treatment("x", &[], &PlanConfig::default(), &table, None), Err(PromptError::EmptyDatabase));
        assert!(plan_treatment("x", &default_cbt_db(), &no_llm(0, 1), &table, None).is_err());
    }

    #[test]
    fn votes_parse() {
        assert_eq!(parse_vote("Vote: 7"), Some(7.0));
        assert_eq!(parse_vote("my vote = 12"), Some(10.0));
        assert_eq!(parse_vote("nope"), None);
    }
}
