//! Per-question orchestration for every strategy.
//!
//! All strategies share one event loop: launch chains, advance the
//! analysis-step clock, poll each stream, segment new text into thoughts,
//! and react per strategy (similarity pruning, step-level ablation
//! pruning, or nothing). Plain SC waits for every chain; ESC runs the
//! same loop over sequential windows and stops on a unanimous window;
//! CoT is SC with one chain; the concise variant only changes the prompt.
//!
//! The loop is single-threaded and event-driven: chain streams never
//! mutate shared state, so a scripted backend plus a fixed seed replays
//! bit-identically.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::aggregator::{candidate_pool_stats, extract_answer, plurality_vote, ExtractionRule};
use crate::backend::{BackendError, ChainSession, GenerationBackend, StreamEvent};
use crate::chain::{
    AnswerFormat, ChainId, ChainStatus, Question, ReasoningChain, RunConfig, Strategy, Thought,
    VoteOutcome,
};
use crate::embedder::{EmbedError, EmbeddingProvider};
use crate::metrics::QuestionResult;
use crate::pruner::{PruneDecision, PruneStrategy, PruningEngine};
use crate::segmenter::{StepClock, ThoughtMerger, ThoughtSegmenter};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("embedding failed: {0}")]
    Embed(#[from] EmbedError),
    #[error("strategy {0:?} needs an embedding provider")]
    MissingEmbedder(Strategy),
}

/// Progress of an ESC run: windows generated so far and whether a
/// unanimous window stopped generation early.
#[derive(Debug, Clone, PartialEq)]
pub struct EscState {
    pub window_size: u32,
    pub windows_done: u32,
    pub collected_answers: Vec<Option<String>>,
    pub stopped_early: bool,
}

/// Everything a question run produces: the metrics row, the raw chains
/// for the run record, and the vote.
#[derive(Debug)]
pub struct QuestionOutcome {
    pub result: QuestionResult,
    pub chains: Vec<ReasoningChain>,
    pub vote: VoteOutcome,
    pub esc: Option<EscState>,
}

/// Runs one question under the configured strategy.
///
/// The config must already be validated. `embedder` is required for the
/// similarity-driven strategies and ignored by the rest.
pub fn run_question(
    question: &Question,
    prompt: &str,
    config: &RunConfig,
    backend: &dyn GenerationBackend,
    embedder: Option<&dyn EmbeddingProvider>,
) -> Result<QuestionOutcome, StrategyError> {
    if config.strategy.needs_embeddings() && embedder.is_none() {
        return Err(StrategyError::MissingEmbedder(config.strategy));
    }
    let session = backend.session(&question.id)?;
    let run = QuestionRun::new(question, config, session, embedder);
    match config.strategy {
        Strategy::Esc => run.run_esc(prompt),
        _ => run.run_all_parallel(prompt),
    }
}

fn prune_strategy_for(strategy: Strategy) -> Option<PruneStrategy> {
    match strategy {
        Strategy::SlimScRp => Some(PruneStrategy::Random),
        Strategy::SlimScDp => Some(PruneStrategy::Diversity),
        Strategy::GlobalRp => Some(PruneStrategy::GlobalRandom),
        Strategy::LeastSimP => Some(PruneStrategy::LeastSimilar),
        _ => None,
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

struct QuestionRun<'a> {
    question: &'a Question,
    config: &'a RunConfig,
    session: Box<dyn ChainSession>,
    embedder: Option<&'a dyn EmbeddingProvider>,
    rule: ExtractionRule,
    chains: Vec<ReasoningChain>,
    segmenters: Vec<ThoughtSegmenter>,
    mergers: Vec<ThoughtMerger>,
    engine: Option<PruningEngine>,
    rng: ChaCha8Rng,
    clock: StepClock,
    kv_samples: Vec<f64>,
    prune_events: Vec<PruneDecision>,
    wall_start: std::time::Instant,
}

impl<'a> QuestionRun<'a> {
    fn new(
        question: &'a Question,
        config: &'a RunConfig,
        session: Box<dyn ChainSession>,
        embedder: Option<&'a dyn EmbeddingProvider>,
    ) -> Self {
        let rule = match question.answer_format {
            AnswerFormat::BoxedInteger => ExtractionRule::boxed_integer(),
            AnswerFormat::MultipleChoiceLetter => {
                ExtractionRule::multiple_choice(question.allowed_letters())
            }
        };
        let engine = prune_strategy_for(config.strategy).map(|strategy| {
            let dimension = embedder
                .map(|e| e.dimension())
                .unwrap_or(crate::defaults::DEFAULT_EMBED_DIM);
            PruningEngine::new(dimension, config.tau_sim, config.delay_steps, strategy)
        });
        // Per-question seed derivation keeps replays independent of the
        // order in which questions run (resume safety).
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ fnv1a64(question.id.as_bytes()));
        Self {
            question,
            config,
            session,
            embedder,
            rule,
            chains: Vec::new(),
            segmenters: Vec::new(),
            mergers: Vec::new(),
            engine,
            rng,
            clock: StepClock::new(),
            kv_samples: Vec::new(),
            prune_events: Vec::new(),
            wall_start: std::time::Instant::now(),
        }
    }

    fn run_all_parallel(mut self, prompt: &str) -> Result<QuestionOutcome, StrategyError> {
        let n = self.config.n_chains;
        self.launch(0..n, prompt)?;
        let ids: Vec<ChainId> = (0..n).map(ChainId).collect();
        self.run_window(&ids)?;
        Ok(self.into_outcome(None))
    }

    fn run_esc(mut self, prompt: &str) -> Result<QuestionOutcome, StrategyError> {
        let n = self.config.n_chains;
        let window = self.config.effective_esc_window();
        let mut esc = EscState {
            window_size: window,
            windows_done: 0,
            collected_answers: Vec::new(),
            stopped_early: false,
        };
        let mut next = 0u32;
        while next < n {
            let upper = (next + window).min(n);
            self.launch(next..upper, prompt)?;
            let ids: Vec<ChainId> = (next..upper).map(ChainId).collect();
            self.run_window(&ids)?;
            esc.windows_done += 1;
            let window_answers: Vec<Option<String>> = ids
                .iter()
                .map(|id| self.chains[id.0 as usize].extracted_answer.clone())
                .collect();
            esc.collected_answers.extend(window_answers.iter().cloned());
            // A window is unanimous when every answer parsed and they all
            // agree; unparseable chains conservatively keep generation
            // going.
            let unanimous = window_answers
                .first()
                .and_then(|a| a.as_ref())
                .is_some_and(|first| {
                    window_answers
                        .iter()
                        .all(|a| a.as_deref() == Some(first.as_str()))
                });
            next = upper;
            if unanimous && next < n {
                esc.stopped_early = true;
                break;
            }
        }
        Ok(self.into_outcome(Some(esc)))
    }

    fn launch(&mut self, ids: std::ops::Range<u32>, prompt: &str) -> Result<(), StrategyError> {
        let at_step = self.clock.current();
        for raw in ids {
            let id = ChainId(raw);
            debug_assert_eq!(raw as usize, self.chains.len(), "chain ids are dense");
            self.chains
                .push(ReasoningChain::new(id, self.question.id.clone(), at_step));
            self.segmenters.push(ThoughtSegmenter::new(
                id,
                self.config.stop_words.clone(),
                Some(self.config.end_of_reasoning.clone()),
            ));
            self.mergers
                .push(ThoughtMerger::new(self.config.min_thought_chars));
            self.session
                .start_chain(id, prompt, &self.config.sampling, at_step)?;
        }
        Ok(())
    }

    fn run_window(&mut self, ids: &[ChainId]) -> Result<(), StrategyError> {
        let scripted = self.session.is_scripted();
        loop {
            if !scripted {
                std::thread::sleep(std::time::Duration::from_millis(
                    self.config.step_interval_ms,
                ));
            }
            let step = self.clock.advance();
            for &id in ids {
                if self.chains[id.0 as usize].is_terminal() {
                    continue;
                }
                self.poll_chain(id, step)?;
            }
            self.step_level_pruning(step);
            if let Some(kv) = self.session.kv_usage_pct() {
                self.kv_samples.push(kv);
            }
            if ids.iter().all(|id| self.chains[id.0 as usize].is_terminal()) {
                return Ok(());
            }
        }
    }

    fn poll_chain(&mut self, id: ChainId, step: u64) -> Result<(), StrategyError> {
        let events = self.session.poll(id, step);
        for event in events {
            if self.chains[id.0 as usize].is_terminal() {
                break; // pruned mid-batch: discard the rest
            }
            match event {
                StreamEvent::Delta { text, tokens } => self.on_delta(id, &text, tokens, step)?,
                StreamEvent::Completed => self.on_completed(id, step)?,
                StreamEvent::Failed { error } => self.on_failed(id, &error, step),
            }
        }
        Ok(())
    }

    fn on_delta(
        &mut self,
        id: ChainId,
        text: &str,
        tokens: u64,
        step: u64,
    ) -> Result<(), StrategyError> {
        let idx = id.0 as usize;
        self.chains[idx].raw_text.push_str(text);
        self.chains[idx].add_tokens(tokens);
        if self.chains[idx].status != ChainStatus::Active {
            return Ok(()); // answer-phase tokens only accumulate
        }
        let segments = self.segmenters[idx].ingest(text);
        let ended = self.segmenters[idx].reasoning_ended();
        self.process_segments(id, segments, step, ended)?;
        if ended && self.chains[idx].status == ChainStatus::Active {
            self.chains[idx]
                .transition(ChainStatus::CompletedReasoning)
                .expect("active chain completes reasoning");
        }
        Ok(())
    }

    fn on_completed(&mut self, id: ChainId, step: u64) -> Result<(), StrategyError> {
        let idx = id.0 as usize;
        if self.chains[idx].status == ChainStatus::Active {
            let segments = self.segmenters[idx].finish();
            self.process_segments(id, segments, step, true)?;
            if self.chains[idx].status == ChainStatus::Active {
                self.chains[idx]
                    .transition(ChainStatus::CompletedReasoning)
                    .expect("active chain completes reasoning");
            }
        }
        if self.chains[idx].status == ChainStatus::CompletedReasoning {
            self.chains[idx]
                .transition(ChainStatus::Finished)
                .expect("completed chain finishes");
            self.chains[idx].end_step = Some(step);
            self.chains[idx].extracted_answer =
                extract_answer(&self.chains[idx].raw_text, &self.rule);
        }
        Ok(())
    }

    fn on_failed(&mut self, id: ChainId, error: &str, step: u64) {
        let idx = id.0 as usize;
        let chain = &mut self.chains[idx];
        chain.failure = Some(error.to_string());
        if chain.status == ChainStatus::Active {
            chain
                .transition(ChainStatus::CompletedReasoning)
                .expect("active chain fails");
        }
        if chain.status == ChainStatus::CompletedReasoning {
            chain.transition(ChainStatus::Finished).expect("failed chain finishes");
        }
        chain.end_step = Some(step);
        chain.extracted_answer = None;
        if let Some(engine) = &mut self.engine {
            engine.forget_chain(id);
        }
    }

    /// Pushes raw segments through the length merger and attaches the
    /// merged thoughts, stopping early if the chain gets pruned on one of
    /// its own thoughts.
    fn process_segments(
        &mut self,
        id: ChainId,
        segments: Vec<String>,
        step: u64,
        flush: bool,
    ) -> Result<(), StrategyError> {
        let idx = id.0 as usize;
        let mut merged = Vec::new();
        {
            let merger = &mut self.mergers[idx];
            for segment in &segments {
                if let Some(thought) = merger.push(segment) {
                    merged.push(thought);
                }
            }
            if flush {
                if let Some(thought) = merger.flush() {
                    merged.push(thought);
                }
            }
        }
        for text in merged {
            if self.chains[idx].status != ChainStatus::Active {
                break;
            }
            self.attach_thought(id, text, step)?;
        }
        Ok(())
    }

    fn attach_thought(&mut self, id: ChainId, text: String, step: u64) -> Result<(), StrategyError> {
        let idx = id.0 as usize;
        let embedding = if self.config.strategy.needs_embeddings() {
            let provider = self.embedder.expect("embedder checked at entry");
            provider.embed_one(&text)?
        } else {
            Vec::new()
        };
        let chain = &mut self.chains[idx];
        chain.thoughts.push(Thought {
            chain_id: id,
            index: chain.thoughts.len() as u32,
            text,
            embedding,
            step_created: step,
            token_offset: chain.completion_tokens,
        });
        if self.config.strategy.needs_embeddings() {
            let engine = self.engine.as_mut().expect("engine for pruning strategies");
            if let Some(decision) =
                engine.maybe_prune_on_new_thought(&mut self.chains, id, step, &mut self.rng)
            {
                self.session.cancel(decision.victim);
                self.prune_events.push(decision);
            }
        }
        Ok(())
    }

    /// One ablation prune per analysis step, when configured.
    fn step_level_pruning(&mut self, step: u64) {
        let Some(engine) = &mut self.engine else {
            return;
        };
        let decision = match engine.strategy() {
            PruneStrategy::GlobalRandom => {
                engine.global_random_prune(&mut self.chains, step, &mut self.rng)
            }
            PruneStrategy::LeastSimilar => {
                engine.least_similar_prune(&mut self.chains, step, &mut self.rng)
            }
            _ => None,
        };
        if let Some(decision) = decision {
            self.session.cancel(decision.victim);
            self.prune_events.push(decision);
        }
    }

    fn into_outcome(self, esc: Option<EscState>) -> QuestionOutcome {
        let mut voters: Vec<&ReasoningChain> =
            self.chains.iter().filter(|c| c.is_voting()).collect();
        // Completion order; ties in the same step break by chain id.
        voters.sort_by_key(|c| (c.end_step.unwrap_or(u64::MAX), c.chain_id));
        let answers: Vec<String> = voters
            .iter()
            .map(|c| c.extracted_answer.clone().expect("voting chain has answer"))
            .collect();
        let vote = plurality_vote(&answers);

        let ground_truth = self.question.ground_truth.as_deref();
        let is_correct = ground_truth
            .map(|truth| vote.final_answer.as_deref() == Some(truth));
        let pool = ground_truth.and_then(|truth| candidate_pool_stats(&self.chains, truth));

        let total_steps = self.clock.current();
        let latency_s = if self.session.is_scripted() {
            total_steps as f64 * self.config.step_interval_ms as f64 / 1000.0
        } else {
            self.wall_start.elapsed().as_secs_f64()
        };
        let mean_kvc = if self.kv_samples.is_empty() {
            None
        } else {
            Some(self.kv_samples.iter().sum::<f64>() / self.kv_samples.len() as f64)
        };
        let peak_kvc = self
            .kv_samples
            .iter()
            .copied()
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));

        let result = QuestionResult {
            question_id: self.question.id.clone(),
            strategy: self.config.strategy,
            final_answer: vote.final_answer.clone(),
            is_correct,
            latency_s,
            completion_tokens_total: self.chains.iter().map(|c| c.completion_tokens).sum(),
            mean_kvc_pct: mean_kvc,
            peak_kvc_pct: peak_kvc,
            prune_events: self.prune_events.clone(),
            pool_correct_proportion: pool.map(|p| p.0),
            pool_correct_present: pool.map(|p| p.1),
            tally: vote.tally.clone(),
            candidate_count: vote.candidate_count,
            tie_broken: vote.tie_broken,
            chains_generated: self.chains.len() as u32,
            unparseable_chains: self
                .chains
                .iter()
                .filter(|c| {
                    c.status == ChainStatus::Finished
                        && c.failure.is_none()
                        && c.extracted_answer.is_none()
                })
                .count() as u32,
            failed_chains: self.chains.iter().filter(|c| c.failure.is_some()).count() as u32,
            total_steps,
        };
        QuestionOutcome {
            result,
            chains: self.chains,
            vote,
            esc,
        }
    }
}
