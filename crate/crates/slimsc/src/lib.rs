//! Orchestration engine for self-consistency test-time scaling with
//! step-wise, similarity-based chain pruning.
//!
//! The engine streams N parallel reasoning chains from a completion
//! backend, segments each stream into thoughts, embeds the thoughts, and
//! prunes redundant chains mid-generation whenever a new thought is too
//! close (cosine similarity above a threshold) to a thought from another
//! chain. Surviving chains are aggregated by plurality vote. Plain SC,
//! early-stopping SC (ESC), concise-prompt SC, single-chain CoT, and two
//! naive pruning ablations run through the same loop for comparison.
//!
//! Modules map one-to-one onto the moving parts:
//!
//! - [`chain`]: core domain types (questions, thoughts, chains, configs)
//! - [`segmenter`]: incremental stop-word segmentation and the step clock
//! - [`embedder`]: embedding providers (HTTP service or deterministic mock)
//! - [`sim_index`]: exact cosine nearest-neighbor store with chain exclusion
//! - [`pruner`]: the pruning loop, chain-selection rule, and ablations
//! - [`backend`]: streaming completion backends (HTTP or scripted mock)
//! - [`aggregator`]: answer extraction and plurality voting
//! - [`strategies`]: per-question orchestration for every strategy
//! - [`metrics`]: per-question results, run reports, trace analyses
//! - [`dataset`]: benchmark loading and prompt templates
//! - [`runner`]: multi-question driver with resume and report emission

pub mod aggregator;
pub mod backend;
pub mod chain;
pub mod dataset;
pub mod defaults;
pub mod embedder;
pub mod metrics;
pub mod pruner;
pub mod runner;
pub mod segmenter;
pub mod sim_index;
pub mod strategies;

pub use chain::{
    AnswerFormat, ChainId, ChainStatus, Question, ReasoningChain, RunConfig, Strategy, Thought,
    VoteOutcome,
};
pub use metrics::{QuestionResult, RunReport};
