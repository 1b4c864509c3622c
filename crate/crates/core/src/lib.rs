//! Zero-shot irony detection, reasoning and understanding workbench.
//!
//! The IDADP pipeline sends three knowledge-informed prompts per statement
//! and votes best-of-three; baseline chain-of-thought strategies run through
//! the same path as one-ballot votes. Around it sit corpus loaders for six
//! benchmark layouts, a cached and retrying LLM gateway, output
//! normalization, the evaluation metrics, a resumable experiment runner and
//! an HTTP API for human rubric annotation.

pub mod annotate;
pub mod corpus;
pub mod gateway;
pub mod metrics;
pub mod normalize;
pub mod pipeline;
pub mod prompts;
pub mod runner;

pub use corpus::{Corpus, CorpusStats, DatasetSpec, Label, StatementRecord};
pub use gateway::{CompletionRequest, Gateway, ModelResponse, Provider};
pub use metrics::{ClassificationReport, ReasoningReport, SimilarityReport};
pub use normalize::{normalize, ParseNote, TaskOutput};
pub use pipeline::{vote, IdadpResult, Pipeline, Strategy, VoteResult};
pub use prompts::{KnowledgeBundle, PromptTemplate, TemplateKind};
pub use runner::{EvalReport, ExperimentConfig, LogRecord};
