pub mod classify;
pub mod corpus;
pub mod explain;
pub mod linalg;
pub mod llmclient;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod textprep;
