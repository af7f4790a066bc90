//! Default knob values: thresholds, delays, chain counts, window rules.
//!
//! Chain counts and similarity thresholds were tuned per model family and
//! benchmark; the tables below carry those tuned values. Everything is
//! overridable through [`crate::chain::RunConfig`] or the CLI.

use crate::chain::Strategy;
use crate::dataset::DatasetName;

/// Similarity threshold above which two cross-chain thoughts mark their
/// chains as a similar pair (random-pruning default; robust across
/// datasets).
pub const DEFAULT_TAU_SIM: f64 = 0.98;

/// Analysis steps to wait before any pruning fires.
pub const DEFAULT_DELAY_STEPS: u64 = 20;

/// Real-time length of one analysis step.
pub const DEFAULT_STEP_INTERVAL_MS: u64 = 3000;

/// Tokens per analysis step under the token clock (replay mode).
pub const TOKENS_PER_REPLAY_STEP: u64 = 100;

/// Thoughts shorter than this merge into the next thought before embedding.
pub const DEFAULT_MIN_THOUGHT_CHARS: usize = 20;

/// Default end-of-reasoning marker emitted by reasoning models.
pub const DEFAULT_END_OF_REASONING: &str = "</think>";

/// Default sentence-embedding model and its dimension.
pub const DEFAULT_EMBED_MODEL: &str = "all-mpnet-base-v2";
pub const DEFAULT_EMBED_DIM: usize = 768;

/// Delimiters that start a new thought. The list is configurable; these
/// three cover the common reasoning-model transitions.
pub fn default_stop_words() -> Vec<String> {
    ["Alternatively", "Wait", "Another"]
        .into_iter()
        .map(str::to_string)
        .collect()
}

/// ESC window rule: `W = max(2, ceil(N / 8))`.
pub fn esc_window(n_chains: u32) -> u32 {
    (n_chains.div_ceil(8)).max(2)
}

/// Model families with tuned defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    R1Distill,
    Qwq,
    Other,
}

impl ModelFamily {
    /// Best-effort classification from a served model name.
    pub fn from_model_name(name: &str) -> Self {
        let lower = name.to_ascii_lowercase();
        if lower.contains("qwq") {
            ModelFamily::Qwq
        } else if lower.contains("r1") || lower.contains("distill") {
            ModelFamily::R1Distill
        } else {
            ModelFamily::Other
        }
    }
}

/// Tuned chain count per (model family, dataset).
pub fn default_n_chains(family: ModelFamily, dataset: DatasetName) -> u32 {
    use DatasetName::*;
    use ModelFamily::*;
    match (family, dataset) {
        (R1Distill, GpqaDiamond) => 64,
        (R1Distill, Aime2024) => 64,
        (R1Distill, AquaRat) => 8,
        (Qwq, GpqaDiamond) => 16,
        (Qwq, Aime2024) => 8,
        (Qwq, AquaRat) => 8,
        _ => 8,
    }
}

/// Tuned similarity threshold per (strategy, model family, dataset).
/// Random pruning uses 0.98 everywhere; diversity pruning runs slightly
/// lower on most settings.
pub fn default_tau_sim(strategy: Strategy, family: ModelFamily, dataset: DatasetName) -> f64 {
    use DatasetName::*;
    use ModelFamily::*;
    match strategy {
        Strategy::SlimScDp => match (family, dataset) {
            (R1Distill, _) => 0.95,
            (Qwq, GpqaDiamond) => 0.95,
            (Qwq, Aime2024) | (Qwq, AquaRat) => 0.98,
            _ => 0.95,
        },
        _ => DEFAULT_TAU_SIM,
    }
}
