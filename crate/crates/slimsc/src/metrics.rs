//! Per-question results, run-level aggregation, and trace analyses.
//!
//! Every number here is a pure function of the run records, so reports
//! can be recomputed offline and byte-compared. In scripted mode latency
//! is step-clock derived (steps times the configured interval), which
//! keeps reports machine-independent.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

use crate::chain::{ChainId, ReasoningChain, Strategy};
use crate::pruner::PruneDecision;
use crate::sim_index::SimilarityIndex;

/// Frozen schema for report files; bump when a column changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot aggregate an empty result set")]
    EmptyInput,
    #[error("chain {0} has thoughts without embeddings; re-run with an embeddings sidecar")]
    MissingEmbeddings(ChainId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Everything measured for one question under one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub question_id: String,
    pub strategy: Strategy,
    pub final_answer: Option<String>,
    /// Absent when the dataset carries no ground truth.
    pub is_correct: Option<bool>,
    /// Wall-clock seconds (live backend) or step-clock seconds (scripted).
    pub latency_s: f64,
    /// Sum over all chains, including pruned chains' partial tokens.
    pub completion_tokens_total: u64,
    pub mean_kvc_pct: Option<f64>,
    pub peak_kvc_pct: Option<f64>,
    pub prune_events: Vec<PruneDecision>,
    pub pool_correct_proportion: Option<f64>,
    pub pool_correct_present: Option<bool>,
    pub tally: BTreeMap<String, u32>,
    pub candidate_count: u32,
    pub tie_broken: bool,
    pub chains_generated: u32,
    pub unparseable_chains: u32,
    pub failed_chains: u32,
    pub total_steps: u64,
}

/// Aggregate over one (strategy, dataset, model) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub strategy: Strategy,
    pub n_questions: u32,
    /// Mean of `is_correct` over questions with known ground truth.
    pub accuracy: Option<f64>,
    pub mean_latency_s: f64,
    pub mean_completion_tokens: f64,
    pub mean_kvc_pct: Option<f64>,
    pub mean_peak_kvc_pct: Option<f64>,
    pub total_prune_events: u64,
    pub mean_pool_correct_proportion: Option<f64>,
    pub per_question: Vec<QuestionResult>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let values: Vec<f64> = values.collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Folds per-question results into a run report.
pub fn aggregate(results: &[QuestionResult]) -> Result<RunReport, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let strategy = results[0].strategy;
    let accuracy = mean(
        results
            .iter()
            .filter_map(|r| r.is_correct.map(|c| if c { 1.0 } else { 0.0 })),
    );
    Ok(RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        strategy,
        n_questions: results.len() as u32,
        accuracy,
        mean_latency_s: mean(results.iter().map(|r| r.latency_s)).unwrap_or(0.0),
        mean_completion_tokens: mean(
            results.iter().map(|r| r.completion_tokens_total as f64),
        )
        .unwrap_or(0.0),
        mean_kvc_pct: mean(results.iter().filter_map(|r| r.mean_kvc_pct)),
        mean_peak_kvc_pct: mean(results.iter().filter_map(|r| r.peak_kvc_pct)),
        total_prune_events: results.iter().map(|r| r.prune_events.len() as u64).sum(),
        mean_pool_correct_proportion: mean(
            results.iter().filter_map(|r| r.pool_correct_proportion),
        ),
        per_question: results.to_vec(),
    })
}

/// Writes `report.json` and `report.csv` (one row per question) into
/// `dir`.
pub fn write_report_files(dir: &Path, report: &RunReport) -> Result<(), MetricsError> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report)?;
    let mut f = std::fs::File::create(dir.join("report.json"))?;
    f.write_all(json.as_bytes())?;
    f.write_all(b"\n")?;

    let mut w = csv::Writer::from_path(dir.join("report.csv"))?;
    w.write_record([
        "question_id",
        "strategy",
        "final_answer",
        "is_correct",
        "latency_s",
        "completion_tokens_total",
        "mean_kvc_pct",
        "peak_kvc_pct",
        "prune_count",
        "pool_correct_proportion",
        "candidate_count",
        "tie_broken",
        "chains_generated",
        "unparseable_chains",
        "failed_chains",
        "total_steps",
    ])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in &report.per_question {
        w.write_record([
            r.question_id.clone(),
            r.strategy.as_str().to_string(),
            opt(r.final_answer.clone()),
            opt(r.is_correct.map(|c| c.to_string())),
            r.latency_s.to_string(),
            r.completion_tokens_total.to_string(),
            opt(r.mean_kvc_pct.map(|v| v.to_string())),
            opt(r.peak_kvc_pct.map(|v| v.to_string())),
            r.prune_events.len().to_string(),
            opt(r.pool_correct_proportion.map(|v| v.to_string())),
            r.candidate_count.to_string(),
            r.tie_broken.to_string(),
            r.chains_generated.to_string(),
            r.unparseable_chains.to_string(),
            r.failed_chains.to_string(),
            r.total_steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Category counts of similar pairs at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBreakdown {
    pub threshold: f64,
    pub pair_count: usize,
    pub correct_correct: usize,
    pub incorrect_incorrect: usize,
    pub correct_incorrect: usize,
    /// `(CC, II, CI)` proportions; absent when no pair exceeded the
    /// threshold (flagged rather than reported as 0/0).
    pub proportions: Option<(f64, f64, f64)>,
}

/// Replay clock for the pair analysis: steps are re-derived from token
/// offsets rather than wall time.
#[derive(Debug, Clone, Copy)]
pub struct ReplayConfig {
    pub tokens_per_step: u64,
    pub delay_steps: u64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            tokens_per_step: crate::defaults::TOKENS_PER_REPLAY_STEP,
            delay_steps: crate::defaults::DEFAULT_DELAY_STEPS,
        }
    }
}

/// Replays similarity detection over completed chains without pruning,
/// recording every chain pair whose thoughts exceeded each threshold, and
/// classifies the pairs by the correctness of their two chains.
///
/// Chains must carry thought embeddings (load the embeddings sidecar
/// first when replaying from run records).
pub fn categorize_similar_pairs(
    chains: &[ReasoningChain],
    ground_truth: &str,
    thresholds: &[f64],
    replay: ReplayConfig,
) -> Result<Vec<ThresholdBreakdown>, MetricsError> {
    for chain in chains {
        if chain.thoughts.iter().any(|t| t.embedding.is_empty()) {
            return Err(MetricsError::MissingEmbeddings(chain.chain_id));
        }
    }
    let dimension = chains
        .iter()
        .flat_map(|c| c.thoughts.first())
        .map(|t| t.embedding.len())
        .next()
        .unwrap_or(crate::defaults::DEFAULT_EMBED_DIM);

    // One detection pass: the matched neighbor does not depend on the
    // threshold because nothing is ever pruned here.
    let mut events: Vec<(u64, ChainId, u32)> = Vec::new();
    for chain in chains {
        for thought in &chain.thoughts {
            let step = thought.token_offset / replay.tokens_per_step.max(1);
            events.push((step, chain.chain_id, thought.index));
        }
    }
    events.sort_unstable();

    let lookup = |id: ChainId, index: u32| -> &crate::chain::Thought {
        chains
            .iter()
            .find(|c| c.chain_id == id)
            .and_then(|c| c.thoughts.iter().find(|t| t.index == index))
            .expect("event refers to an existing thought")
    };

    let mut index = SimilarityIndex::new(dimension);
    let mut matches: Vec<(ChainId, ChainId, f64)> = Vec::new();
    for (step, chain_id, thought_index) in events {
        let thought = lookup(chain_id, thought_index);
        if step > replay.delay_steps {
            if let Some(neighbor) = index.find_nearest_excluding(&thought.embedding, chain_id) {
                matches.push((chain_id, neighbor.chain_id, neighbor.similarity));
            }
        }
        index
            .insert(chain_id, thought_index, thought.embedding.clone())
            .expect("unique thought keys");
    }

    let is_correct = |id: ChainId| -> bool {
        chains
            .iter()
            .find(|c| c.chain_id == id)
            .map(|c| c.extracted_answer.as_deref() == Some(ground_truth))
            .unwrap_or(false)
    };

    let mut out = Vec::new();
    for &threshold in thresholds {
        let mut pairs: BTreeSet<(ChainId, ChainId)> = BTreeSet::new();
        for &(a, b, sim) in &matches {
            if sim > threshold {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
        let mut cc = 0;
        let mut ii = 0;
        let mut ci = 0;
        for (a, b) in &pairs {
            match (is_correct(*a), is_correct(*b)) {
                (true, true) => cc += 1,
                (false, false) => ii += 1,
                _ => ci += 1,
            }
        }
        let total = pairs.len();
        out.push(ThresholdBreakdown {
            threshold,
            pair_count: total,
            correct_correct: cc,
            incorrect_incorrect: ii,
            correct_incorrect: ci,
            proportions: (total > 0).then(|| {
                let t = total as f64;
                (cc as f64 / t, ii as f64 / t, ci as f64 / t)
            }),
        });
    }
    Ok(out)
}

/// Writes `pairs_by_threshold.csv` into `dir`.
pub fn write_pairs_csv(dir: &Path, breakdowns: &[ThresholdBreakdown]) -> Result<(), MetricsError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("pairs_by_threshold.csv"))?;
    w.write_record([
        "threshold",
        "pair_count",
        "cc_count",
        "ii_count",
        "ci_count",
        "cc_prop",
        "ii_prop",
        "ci_prop",
    ])?;
    for b in breakdowns {
        let (cc, ii, ci) = match b.proportions {
            Some((cc, ii, ci)) => (cc.to_string(), ii.to_string(), ci.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            b.threshold.to_string(),
            b.pair_count.to_string(),
            b.correct_correct.to_string(),
            b.incorrect_incorrect.to_string(),
            b.correct_incorrect.to_string(),
            cc,
            ii,
            ci,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical CDFs of per-chain completion tokens, split by chain
/// correctness.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenCdf {
    correct: Vec<u64>,
    incorrect: Vec<u64>,
}

impl TokenCdf {
    /// Builds from `(completion_tokens, is_correct)` samples.
    pub fn new(samples: &[(u64, bool)]) -> Self {
        let mut correct: Vec<u64> = samples.iter().filter(|s| s.1).map(|s| s.0).collect();
        let mut incorrect: Vec<u64> = samples.iter().filter(|s| !s.1).map(|s| s.0).collect();
        correct.sort_unstable();
        incorrect.sort_unstable();
        Self { correct, incorrect }
    }

    /// Fractions of (correct, incorrect) chains that completed within
    /// `bound` tokens; a side is `None` when it has no samples at all.
    pub fn fraction_at(&self, bound: u64) -> (Option<f64>, Option<f64>) {
        let frac = |sorted: &[u64]| {
            if sorted.is_empty() {
                None
            } else {
                let upto = sorted.partition_point(|&v| v <= bound);
                Some(upto as f64 / sorted.len() as f64)
            }
        };
        (frac(&self.correct), frac(&self.incorrect))
    }

    pub fn has_correct(&self) -> bool {
        !self.correct.is_empty()
    }

    pub fn has_incorrect(&self) -> bool {
        !self.incorrect.is_empty()
    }

    /// CDF table over the union of observed token counts.
    pub fn rows(&self) -> Vec<(u64, Option<f64>, Option<f64>)> {
        let bounds: BTreeSet<u64> = self
            .correct
            .iter()
            .chain(self.incorrect.iter())
            .copied()
            .collect();
        bounds
            .into_iter()
            .map(|b| {
                let (c, i) = self.fraction_at(b);
                (b, c, i)
            })
            .collect()
    }
}

/// Writes `token_cdf.csv` into `dir`.
pub fn write_token_cdf_csv(dir: &Path, cdf: &TokenCdf) -> Result<(), MetricsError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("token_cdf.csv"))?;
    w.write_record(["token_bound", "correct_cdf", "incorrect_cdf"])?;
    for (bound, c, i) in cdf.rows() {
        w.write_record([
            bound.to_string(),
            c.map(|v| v.to_string()).unwrap_or_default(),
            i.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
