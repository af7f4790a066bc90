//! Multi-question run driver: executes a strategy over a dataset, writes
//! run records incrementally, and emits the final reports.
//!
//! Layout of an output directory:
//!
//! - `chains.jsonl`   — one reasoning chain per line (no embeddings)
//! - `results.jsonl`  — one question result per line (the resume ledger)
//! - `embeddings.jsonl` — optional sidecar with per-thought embeddings
//! - `report.json`, `report.csv` — aggregate report
//!
//! Runs are resumable: questions already present in `results.jsonl` are
//! skipped, and per-question seeding does not depend on execution order,
//! so an interrupted-and-resumed run reproduces the uninterrupted report.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::backend::{BackendError, GenerationBackend};
use crate::chain::{ChainId, ReasoningChain, RunConfig};
use crate::dataset::Dataset;
use crate::embedder::{Embedding, EmbeddingProvider};
use crate::metrics::{
    aggregate, categorize_similar_pairs, write_pairs_csv, write_report_files,
    write_token_cdf_csv, MetricsError, QuestionResult, ReplayConfig, RunReport,
    ThresholdBreakdown, TokenCdf,
};
use crate::strategies::{run_question, StrategyError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("run record corrupt at {path}:{line}: {detail}")]
    CorruptRecord {
        path: PathBuf,
        line: usize,
        detail: String,
    },
}

/// Per-run knobs that are not part of the strategy config.
#[derive(Debug, Clone, Default)]
pub struct RunnerOptions {
    /// Dump per-thought embeddings to `embeddings.jsonl` for the offline
    /// analyses.
    pub dump_embeddings: bool,
    /// Restrict the run to these question ids.
    pub question_filter: Option<HashSet<String>>,
}

/// What a run produced, beyond the files on disk.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub executed: usize,
    pub resumed: usize,
    /// Questions that could not run at all (hard backend/embedder errors),
    /// with the error text.
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingRecord {
    question_id: String,
    chain_id: ChainId,
    thought_index: u32,
    embedding: Embedding,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| RunError::CorruptRecord {
            path: path.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

fn append_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), RunError> {
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| RunError::CorruptRecord {
            path: path.to_path_buf(),
            line: 0,
            detail: e.to_string(),
        })?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Executes the configured strategy over every dataset question, resuming
/// from any existing run records in `out_dir`, and writes the aggregate
/// report.
pub fn run(
    config: &RunConfig,
    dataset: &Dataset,
    backend: &dyn GenerationBackend,
    embedder: Option<&dyn EmbeddingProvider>,
    out_dir: &Path,
    options: &RunnerOptions,
) -> Result<RunOutcome, RunError> {
    std::fs::create_dir_all(out_dir)?;
    let results_path = out_dir.join("results.jsonl");
    let chains_path = out_dir.join("chains.jsonl");
    let embeddings_path = out_dir.join("embeddings.jsonl");

    let mut recorded: HashMap<String, QuestionResult> = read_jsonl(&results_path)?
        .into_iter()
        .map(|r: QuestionResult| (r.question_id.clone(), r))
        .collect();
    let resumed = recorded.len();

    let mut executed = 0;
    let mut failures = Vec::new();
    for question in &dataset.questions {
        if let Some(filter) = &options.question_filter {
            if !filter.contains(&question.id) {
                continue;
            }
        }
        if recorded.contains_key(&question.id) {
            continue;
        }
        let prompt = dataset.prompt_for(question, config.strategy);
        let outcome = match run_question(question, &prompt, config, backend, embedder) {
            Ok(outcome) => outcome,
            Err(e) => {
                failures.push((question.id.clone(), e.to_string()));
                continue;
            }
        };
        append_jsonl(&chains_path, &outcome.chains)?;
        append_jsonl(&results_path, std::slice::from_ref(&outcome.result))?;
        if options.dump_embeddings {
            let rows: Vec<EmbeddingRecord> = outcome
                .chains
                .iter()
                .flat_map(|c| {
                    c.thoughts.iter().map(|t| EmbeddingRecord {
                        question_id: c.question_id.clone(),
                        chain_id: c.chain_id,
                        thought_index: t.index,
                        embedding: t.embedding.clone(),
                    })
                })
                .collect();
            append_jsonl(&embeddings_path, &rows)?;
        }
        recorded.insert(question.id.clone(), outcome.result);
        executed += 1;
    }

    // Aggregate in dataset order so reports do not depend on which
    // questions were resumed.
    let ordered: Vec<QuestionResult> = dataset
        .questions
        .iter()
        .filter_map(|q| recorded.get(&q.id).cloned())
        .collect();
    let report = aggregate(&ordered)?;
    write_report_files(out_dir, &report)?;
    Ok(RunOutcome {
        report,
        executed,
        resumed,
        failures,
    })
}

/// Reads back the chains recorded for one question, reattaching
/// embeddings from the sidecar when present.
pub fn load_recorded_chains(
    out_dir: &Path,
    question_id: &str,
) -> Result<Vec<ReasoningChain>, RunError> {
    let mut chains: Vec<ReasoningChain> = read_jsonl(&out_dir.join("chains.jsonl"))?
        .into_iter()
        .filter(|c: &ReasoningChain| c.question_id == question_id)
        .collect();
    let sidecar = out_dir.join("embeddings.jsonl");
    if sidecar.exists() {
        let records: Vec<EmbeddingRecord> = read_jsonl(&sidecar)?;
        let mut lookup: HashMap<(ChainId, u32), Embedding> = records
            .into_iter()
            .filter(|r| r.question_id == question_id)
            .map(|r| ((r.chain_id, r.thought_index), r.embedding))
            .collect();
        for chain in &mut chains {
            for thought in &mut chain.thoughts {
                if let Some(embedding) = lookup.remove(&(chain.chain_id, thought.index)) {
                    thought.embedding = embedding;
                }
            }
        }
    }
    Ok(chains)
}

/// Sums per-question pair breakdowns into dataset-level proportions.
pub fn combine_breakdowns(per_question: &[Vec<ThresholdBreakdown>]) -> Vec<ThresholdBreakdown> {
    let mut by_threshold: Vec<ThresholdBreakdown> = Vec::new();
    for breakdowns in per_question {
        for b in breakdowns {
            match by_threshold
                .iter_mut()
                .find(|acc| acc.threshold == b.threshold)
            {
                Some(acc) => {
                    acc.pair_count += b.pair_count;
                    acc.correct_correct += b.correct_correct;
                    acc.incorrect_incorrect += b.incorrect_incorrect;
                    acc.correct_incorrect += b.correct_incorrect;
                }
                None => by_threshold.push(b.clone()),
            }
        }
    }
    for acc in &mut by_threshold {
        acc.proportions = (acc.pair_count > 0).then(|| {
            let t = acc.pair_count as f64;
            (
                acc.correct_correct as f64 / t,
                acc.incorrect_incorrect as f64 / t,
                acc.correct_incorrect as f64 / t,
            )
        });
    }
    by_threshold
}

/// Offline analyses over a completed run directory: similar-pair
/// categorization (requires the embeddings sidecar) and the completion
/// token CDF. Writes `pairs_by_threshold.csv` and `token_cdf.csv`.
pub fn analyze_run(
    out_dir: &Path,
    dataset: &Dataset,
    thresholds: &[f64],
    replay: ReplayConfig,
) -> Result<(Vec<ThresholdBreakdown>, TokenCdf), RunError> {
    let mut per_question = Vec::new();
    let mut cdf_samples: Vec<(u64, bool)> = Vec::new();
    for question in &dataset.questions {
        let chains = load_recorded_chains(out_dir, &question.id)?;
        if chains.is_empty() {
            continue;
        }
        let Some(truth) = &question.ground_truth else {
            continue;
        };
        per_question.push(categorize_similar_pairs(
            &chains, truth, thresholds, replay,
        )?);
        for chain in chains.iter().filter(|c| c.is_voting()) {
            let correct = chain.extracted_answer.as_deref() == Some(truth.as_str());
            cdf_samples.push((chain.completion_tokens, correct));
        }
    }
    let combined = combine_breakdowns(&per_question);
    let cdf = TokenCdf::new(&cdf_samples);
    write_pairs_csv(out_dir, &combined)?;
    write_token_cdf_csv(out_dir, &cdf)?;
    Ok((combined, cdf))
}
