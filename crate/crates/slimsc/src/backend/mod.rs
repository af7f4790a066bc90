//! Streaming completion backends.
//!
//! The orchestration loop drives chains through a [`ChainSession`]: start
//! up to N streams, poll each one every analysis step, cancel pruned
//! chains. Two implementations exist: [`http::HttpBackend`] talks to an
//! OpenAI-compatible streaming completions endpoint, and
//! [`mock::MockBackend`] replays a scripted trace file for deterministic
//! runs and tests.

pub mod http;
pub mod mock;

use crate::chain::{ChainId, SamplingParams};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("scripted trace missing for question {question}: {detail}")]
    TraceMissing { question: String, detail: String },
    #[error("trace file error: {0}")]
    TraceFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One event on a chain's generation stream.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    /// New text, with the number of completion tokens it accounts for.
    Delta { text: String, tokens: u64 },
    /// Natural end of the stream.
    Completed,
    /// Transport-level failure; the chain is excluded from voting but not
    /// counted as pruned.
    Failed { error: String },
}

/// Streaming session scoped to one question: owns up to N concurrent
/// chain streams with per-chain cancellation.
pub trait ChainSession {
    /// Launches one chain. `at_step` is the analysis step at which the
    /// chain starts (nonzero when ESC opens a later window).
    fn start_chain(
        &mut self,
        chain: ChainId,
        prompt: &str,
        sampling: &SamplingParams,
        at_step: u64,
    ) -> Result<(), BackendError>;

    /// Drains the events available for `chain` at `current_step`. The
    /// scripted backend releases events whose emit step has been reached;
    /// the HTTP backend returns whatever has arrived since the last poll.
    fn poll(&mut self, chain: ChainId, current_step: u64) -> Vec<StreamEvent>;

    /// Stops token production for a chain. Idempotent; unknown or already
    /// finished chains are a no-op.
    fn cancel(&mut self, chain: ChainId);

    /// Current KV-cache usage in percent, if the backend can report one.
    fn kv_usage_pct(&mut self) -> Option<f64>;

    /// Scripted sessions run on the logical step clock (no sleeping, no
    /// wall-clock latency); live sessions tick in real time.
    fn is_scripted(&self) -> bool;
}

/// Factory for per-question sessions.
pub trait GenerationBackend: Send + Sync {
    fn session(&self, question_id: &str) -> Result<Box<dyn ChainSession>, BackendError>;
}
