use std::path::{Path, PathBuf};

use lumen_core::explain::LimeConfig;
use lumen_core::llmclient::BackendConfig;
use lumen_core::prompts::{DialogueOptions, PlanConfig};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Service configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub port: u16,
    pub backend: BackendConfig,
    /// Classifier checkpoint; without one the classifier path answers 409.
    pub model_checkpoint_path: Option<PathBuf>,
    /// Embedding table for CNN checkpoints.
    pub embeddings_path: Option<PathBuf>,
    /// Defaults to the bundled six-module database.
    pub cbt_db_path: Option<PathBuf>,
    /// Embedding table used by the planner; defaults to the bundled one.
    pub cbt_embeddings_path: Option<PathBuf>,
    /// Defaults to the bundled exemplar bank.
    pub exemplar_bank_path: Option<PathBuf>,
    pub journal_dir: PathBuf,
    pub cors_origin: Option<String>,
    pub dialogue: DialogueOptions,
    pub planner: PlanConfig,
    pub lime: LimeConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            backend: BackendConfig::default(),
            model_checkpoint_path: None,
            embeddings_path: None,
            cbt_db_path: None,
            cbt_embeddings_path: None,
            exemplar_bank_path: None,
            journal_dir: PathBuf::from("journal"),
            cors_origin: None,
            dialogue: DialogueOptions::default(),
            planner: PlanConfig::default(),
            lime: LimeConfig { samples: 500, ..LimeConfig::default() },
        }
    }
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))
    }
}
