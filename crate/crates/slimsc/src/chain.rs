//! Core domain types shared by every other module.
//!
//! Everything here is a plain value object. [`ReasoningChain`] is the one
//! type with interesting lifecycle rules: its status only ever moves
//! forward (`Active -> Pruned | CompletedReasoning`, then
//! `CompletedReasoning -> Finished`) and transitions are checked at
//! runtime so a buggy event loop cannot resurrect a pruned chain.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::embedder::Embedding;

/// How a question expects its final answer to be written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerFormat {
    /// Integer inside `\boxed{}` on the last line (math competition style).
    BoxedInteger,
    /// Single letter on an `Answer: X` line (multiple choice).
    MultipleChoiceLetter,
}

/// One multiple-choice option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub letter: char,
    pub text: String,
}

/// A benchmark question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    /// Ordered options for multiple-choice questions, empty otherwise.
    #[serde(default)]
    pub options: Vec<Choice>,
    /// Canonical ground-truth answer, when known.
    #[serde(default)]
    pub ground_truth: Option<String>,
    pub answer_format: AnswerFormat,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuestionError {
    #[error("question {0}: multiple-choice questions need a non-empty options list")]
    MissingOptions(String),
    #[error("question {0}: boxed-integer questions must not carry options")]
    UnexpectedOptions(String),
}

impl Question {
    /// Checks the format/options invariant.
    pub fn validate(&self) -> Result<(), QuestionError> {
        match self.answer_format {
            AnswerFormat::MultipleChoiceLetter if self.options.is_empty() => {
                Err(QuestionError::MissingOptions(self.id.clone()))
            }
            AnswerFormat::BoxedInteger if !self.options.is_empty() => {
                Err(QuestionError::UnexpectedOptions(self.id.clone()))
            }
            _ => Ok(()),
        }
    }

    /// Letters that are valid extracted answers for this question.
    /// Empty for boxed-integer questions.
    pub fn allowed_letters(&self) -> Vec<char> {
        self.options.iter().map(|c| c.letter).collect()
    }
}

/// Identifier of one reasoning chain, unique within a question run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ChainId(pub u32);

impl std::fmt::Display for ChainId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// A delimited reasoning segment together with its embedding.
///
/// `embedding` is empty for strategies that never embed (plain SC, CoT).
/// `token_offset` records the chain's cumulative completion tokens at the
/// moment the thought was emitted; the trace-replay analyses use it to
/// re-derive analysis steps under the 100-tokens-per-step rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thought {
    pub chain_id: ChainId,
    /// 0-based contiguous position within the chain.
    pub index: u32,
    pub text: String,
    #[serde(skip)]
    pub embedding: Embedding,
    /// Analysis-step ordinal at which the thought was completed.
    pub step_created: u64,
    #[serde(default)]
    pub token_offset: u64,
}

/// Lifecycle of a reasoning chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStatus {
    /// Still generating reasoning (thoughts may arrive and pruning applies).
    Active,
    /// Cancelled by the pruner; contributes nothing to the vote.
    Pruned,
    /// Reasoning phase ended; the chain may still stream answer tokens.
    CompletedReasoning,
    /// Stream closed; answer extraction has run.
    Finished,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid chain status transition {from:?} -> {to:?}")]
pub struct TransitionError {
    pub from: ChainStatus,
    pub to: ChainStatus,
}

impl ChainStatus {
    /// Whether `self -> to` is one of the allowed forward edges.
    pub fn can_transition(self, to: ChainStatus) -> bool {
        use ChainStatus::*;
        matches!(
            (self, to),
            (Active, Pruned) | (Active, CompletedReasoning) | (CompletedReasoning, Finished)
        )
    }
}

/// One sampled reasoning chain for a question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub chain_id: ChainId,
    pub question_id: String,
    pub thoughts: Vec<Thought>,
    pub status: ChainStatus,
    /// Full streamed text, reasoning and answer phases included.
    pub raw_text: String,
    pub completion_tokens: u64,
    pub extracted_answer: Option<String>,
    /// Analysis step at which the chain was launched.
    pub start_step: u64,
    /// Analysis step at which the stream closed (completion or prune).
    pub end_step: Option<u64>,
    /// Analysis step at which the chain was pruned, if it was.
    pub prune_step: Option<u64>,
    /// Transport-level failure, if the stream died. Failed chains are
    /// excluded from voting but are not counted as pruned.
    #[serde(default)]
    pub failure: Option<String>,
}

impl ReasoningChain {
    pub fn new(chain_id: ChainId, question_id: impl Into<String>, start_step: u64) -> Self {
        Self {
            chain_id,
            question_id: question_id.into(),
            thoughts: Vec::new(),
            status: ChainStatus::Active,
            raw_text: String::new(),
            completion_tokens: 0,
            extracted_answer: None,
            start_step,
            end_step: None,
            prune_step: None,
            failure: None,
        }
    }

    /// Applies a status transition, rejecting anything but the allowed
    /// forward edges.
    pub fn transition(&mut self, to: ChainStatus) -> Result<(), TransitionError> {
        if self.status.can_transition(to) {
            self.status = to;
            Ok(())
        } else {
            Err(TransitionError {
                from: self.status,
                to,
            })
        }
    }

    /// Marks the chain pruned at `step`. A pruned chain never carries an
    /// extracted answer.
    pub fn mark_pruned(&mut self, step: u64) -> Result<(), TransitionError> {
        self.transition(ChainStatus::Pruned)?;
        self.prune_step = Some(step);
        self.end_step = Some(step);
        self.extracted_answer = None;
        Ok(())
    }

    /// Chain still counts as a survivor for the pruning guard (anything
    /// not pruned and not failed).
    pub fn is_survivor(&self) -> bool {
        self.status != ChainStatus::Pruned && self.failure.is_none()
    }

    /// Chain has reached a terminal state for the event loop.
    pub fn is_terminal(&self) -> bool {
        matches!(self.status, ChainStatus::Pruned | ChainStatus::Finished)
    }

    /// Chain participates in the plurality vote.
    pub fn is_voting(&self) -> bool {
        self.status == ChainStatus::Finished
            && self.failure.is_none()
            && self.extracted_answer.is_some()
    }

    pub fn add_tokens(&mut self, tokens: u64) {
        self.completion_tokens += tokens;
    }
}

/// Strategy under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Single greedy chain.
    Cot,
    /// Plain self-consistency: N chains, wait for all, plurality vote.
    Sc,
    /// Early-stopping self-consistency: sequential windows of W chains.
    Esc,
    /// SC with a "Be concise." instruction appended to the prompt.
    CcotSc,
    /// Similarity pruning, random victim within a similar pair.
    SlimScRp,
    /// Similarity pruning, diversity-based victim selection.
    SlimScDp,
    /// Ablation: prune one random active chain per analysis step.
    GlobalRp,
    /// Ablation: prune within the least-similar cross-chain pair.
    LeastSimP,
}

impl Strategy {
    pub fn is_slim(self) -> bool {
        matches!(self, Strategy::SlimScRp | Strategy::SlimScDp)
    }

    /// Strategies that need an embedding provider.
    pub fn needs_embeddings(self) -> bool {
        matches!(
            self,
            Strategy::SlimScRp | Strategy::SlimScDp | Strategy::LeastSimP
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Cot => "cot",
            Strategy::Sc => "sc",
            Strategy::Esc => "esc",
            Strategy::CcotSc => "ccot-sc",
            Strategy::SlimScRp => "slim-sc-rp",
            Strategy::SlimScDp => "slim-sc-dp",
            Strategy::GlobalRp => "global-rp",
            Strategy::LeastSimP => "least-sim-p",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cot" => Ok(Strategy::Cot),
            "sc" => Ok(Strategy::Sc),
            "esc" => Ok(Strategy::Esc),
            "ccot-sc" | "ccot_sc" | "ccot" => Ok(Strategy::CcotSc),
            "slim-sc-rp" | "slim-rp" | "slimsc-rp" => Ok(Strategy::SlimScRp),
            "slim-sc-dp" | "slim-dp" | "slimsc-dp" => Ok(Strategy::SlimScDp),
            "global-rp" => Ok(Strategy::GlobalRp),
            "least-sim-p" | "least-sim" => Ok(Strategy::LeastSimP),
            other => Err(format!("unknown strategy '{other}'")),
        }
    }
}

/// Sampling parameters passed through to the completion backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            top_p: 0.95,
            max_tokens: 32_768,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("n_chains must be positive")]
    ZeroChains,
    #[error("tau_sim must be a positive finite number")]
    BadTau,
    #[error("step_interval_ms must be positive")]
    ZeroInterval,
    #[error("esc window must satisfy 2 <= window <= n_chains, got {0}")]
    BadEscWindow(u32),
}

/// Full configuration of one run.
///
/// `tau_sim` above 1.0 is legal and disables pruning outright (cosine
/// similarity never exceeds 1), which is how the disable-equivalence
/// checks degrade Slim-SC to plain SC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub n_chains: u32,
    pub tau_sim: f64,
    pub delay_steps: u64,
    pub step_interval_ms: u64,
    pub stop_words: Vec<String>,
    /// Marker that ends the reasoning phase of a stream.
    pub end_of_reasoning: String,
    /// Thoughts shorter than this many characters merge into the next one
    /// before embedding.
    pub min_thought_chars: usize,
    /// ESC window size; derived as `max(2, ceil(N / 8))` when unset.
    pub esc_window: Option<u32>,
    pub sampling: SamplingParams,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Sc,
            n_chains: 8,
            tau_sim: crate::defaults::DEFAULT_TAU_SIM,
            delay_steps: crate::defaults::DEFAULT_DELAY_STEPS,
            step_interval_ms: crate::defaults::DEFAULT_STEP_INTERVAL_MS,
            stop_words: crate::defaults::default_stop_words(),
            end_of_reasoning: crate::defaults::DEFAULT_END_OF_REASONING.to_string(),
            min_thought_chars: crate::defaults::DEFAULT_MIN_THOUGHT_CHARS,
            esc_window: None,
            sampling: SamplingParams::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Validates the config and normalizes it (CoT forces `n_chains = 1`).
    pub fn validated(mut self) -> Result<Self, ConfigError> {
        if self.n_chains == 0 {
            return Err(ConfigError::ZeroChains);
        }
        if self.step_interval_ms == 0 {
            return Err(ConfigError::ZeroInterval);
        }
        if !(self.tau_sim.is_finite() && self.tau_sim > 0.0) {
            return Err(ConfigError::BadTau);
        }
        if self.strategy == Strategy::Cot {
            self.n_chains = 1;
        }
        if self.strategy == Strategy::Esc {
            let w = self.effective_esc_window();
            if w < 2 || w > self.n_chains.max(2) {
                return Err(ConfigError::BadEscWindow(w));
            }
        }
        Ok(self)
    }

    /// Window size used by ESC: the configured value, or the derived rule.
    pub fn effective_esc_window(&self) -> u32 {
        self.esc_window
            .unwrap_or_else(|| crate::defaults::esc_window(self.n_chains))
    }
}

/// Outcome of a plurality vote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub final_answer: Option<String>,
    /// Answer -> number of supporting chains. BTreeMap keeps serialization
    /// order deterministic.
    pub tally: BTreeMap<String, u32>,
    pub candidate_count: u32,
    pub tie_broken: bool,
}

impl VoteOutcome {
    pub fn empty() -> Self {
        Self {
            final_answer: None,
            tally: BTreeMap::new(),
            candidate_count: 0,
            tie_broken: false,
        }
    }
}

/// Normalizes a raw answer fragment into its canonical voting label.
///
/// Returns `None` when the fragment does not parse under the format.
pub fn canonicalize_answer(raw: &str, format: AnswerFormat) -> Option<String> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return None;
    }
    match format {
        AnswerFormat::BoxedInteger => trimmed
            .replace(',', "")
            .parse::<i64>()
            .ok()
            .map(|n| n.to_string()),
        AnswerFormat::MultipleChoiceLetter => {
            let mut chars = trimmed.chars();
            let letter = chars.next()?;
            if chars.next().is_some() {
                return None;
            }
            let upper = letter.to_ascii_uppercase();
            if ('A'..='E').contains(&upper) {
                Some(upper.to_string())
            } else {
                None
            }
        }
    }
}
