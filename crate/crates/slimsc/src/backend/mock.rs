//! Scripted mock backend: replays trace files for deterministic runs.
//!
//! Trace files are JSONL, one chain per line:
//!
//! ```json
//! {"question_id": "q1", "chain": 0,
//!  "events": [{"text": "Let x=2. ", "tokens": 12, "step": 1},
//!             {"text": "Wait, recheck.</think>", "tokens": 30, "step": 4}],
//!  "answer_text": " The answer is \\boxed{42}.", "answer_tokens": 8}
//! ```
//!
//! `step` is the analysis step (relative to the chain's launch) at which
//! the delta becomes visible; steps must be non-decreasing within a
//! chain. `answer_text` is delivered as a final delta at the last event's
//! step. KV-cache usage is reported through a proxy: the summed
//! cumulative tokens of all still-active chains over a configured
//! capacity.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use super::{BackendError, ChainSession, GenerationBackend, StreamEvent};
use crate::chain::{ChainId, SamplingParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEvent {
    pub text: String,
    pub tokens: u64,
    pub step: u64,
}

/// One chain's scripted stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainTrace {
    pub question_id: String,
    pub chain: u32,
    pub events: Vec<TraceEvent>,
    /// Terminal answer text, delivered as a final delta.
    #[serde(default)]
    pub answer_text: String,
    #[serde(default)]
    pub answer_tokens: u64,
}

impl ChainTrace {
    /// Full delta sequence including the synthetic answer event.
    fn full_events(&self) -> Vec<TraceEvent> {
        let mut events = self.events.clone();
        if !self.answer_text.is_empty() {
            let step = events.last().map(|e| e.step).unwrap_or(1);
            events.push(TraceEvent {
                text: self.answer_text.clone(),
                tokens: self.answer_tokens,
                step,
            });
        }
        events
    }

    fn validate(&self) -> Result<(), BackendError> {
        let mut prev = 0u64;
        for ev in &self.events {
            if ev.step < prev {
                return Err(BackendError::TraceFormat(format!(
                    "question {} chain {}: emit steps must be non-decreasing",
                    self.question_id, self.chain
                )));
            }
            prev = ev.step;
        }
        Ok(())
    }
}

/// All scripted chains, keyed by question.
#[derive(Debug, Default, Clone)]
pub struct TraceSet {
    by_question: HashMap<String, Vec<ChainTrace>>,
}

impl TraceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, trace: ChainTrace) -> Result<(), BackendError> {
        trace.validate()?;
        let chains = self.by_question.entry(trace.question_id.clone()).or_default();
        chains.push(trace);
        chains.sort_by_key(|t| t.chain);
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path)?;
        let mut set = Self::new();
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let trace: ChainTrace = serde_json::from_str(&line).map_err(|e| {
                BackendError::TraceFormat(format!("line {}: {e}", lineno + 1))
            })?;
            set.push(trace)?;
        }
        Ok(set)
    }

    pub fn questions(&self) -> impl Iterator<Item = &str> {
        self.by_question.keys().map(String::as_str)
    }

    fn chains_for(&self, question_id: &str) -> Option<&[ChainTrace]> {
        self.by_question.get(question_id).map(Vec::as_slice)
    }
}

/// Scripted backend over a loaded [`TraceSet`].
pub struct MockBackend {
    traces: Arc<TraceSet>,
    kv_capacity_tokens: u64,
}

impl MockBackend {
    pub fn new(traces: TraceSet) -> Self {
        Self {
            traces: Arc::new(traces),
            kv_capacity_tokens: 1_000_000,
        }
    }

    pub fn with_kv_capacity(mut self, tokens: u64) -> Self {
        self.kv_capacity_tokens = tokens.max(1);
        self
    }
}

impl GenerationBackend for MockBackend {
    fn session(&self, question_id: &str) -> Result<Box<dyn ChainSession>, BackendError> {
        let chains = self
            .traces
            .chains_for(question_id)
            .ok_or_else(|| BackendError::TraceMissing {
                question: question_id.to_string(),
                detail: "no trace lines for this question".into(),
            })?
            .to_vec();
        Ok(Box::new(MockSession {
            chains,
            streams: HashMap::new(),
            kv_capacity_tokens: self.kv_capacity_tokens,
        }))
    }
}

#[derive(Debug)]
struct MockStream {
    events: Vec<TraceEvent>,
    next_event: usize,
    start_step: u64,
    delivered_tokens: u64,
    cancelled: bool,
    completed: bool,
}

pub struct MockSession {
    chains: Vec<ChainTrace>,
    streams: HashMap<ChainId, MockStream>,
    kv_capacity_tokens: u64,
}

impl ChainSession for MockSession {
    fn start_chain(
        &mut self,
        chain: ChainId,
        _prompt: &str,
        _sampling: &SamplingParams,
        at_step: u64,
    ) -> Result<(), BackendError> {
        let trace = self
            .chains
            .iter()
            .find(|t| t.chain == chain.0)
            .ok_or_else(|| BackendError::TraceMissing {
                question: self.chains.first().map(|t| t.question_id.clone()).unwrap_or_default(),
                detail: format!("no trace for chain {}", chain.0),
            })?;
        self.streams.insert(
            chain,
            MockStream {
                events: trace.full_events(),
                next_event: 0,
                start_step: at_step,
                delivered_tokens: 0,
                cancelled: false,
                completed: false,
            },
        );
        Ok(())
    }

    fn poll(&mut self, chain: ChainId, current_step: u64) -> Vec<StreamEvent> {
        let Some(stream) = self.streams.get_mut(&chain) else {
            return Vec::new();
        };
        if stream.cancelled || stream.completed {
            return Vec::new();
        }
        let mut out = Vec::new();
        while stream.next_event < stream.events.len() {
            let ev = &stream.events[stream.next_event];
            if stream.start_step + ev.step > current_step {
                break;
            }
            out.push(StreamEvent::Delta {
                text: ev.text.clone(),
                tokens: ev.tokens,
            });
            stream.delivered_tokens += ev.tokens;
            stream.next_event += 1;
        }
        if stream.next_event == stream.events.len() {
            stream.completed = true;
            out.push(StreamEvent::Completed);
        }
        out
    }

    fn cancel(&mut self, chain: ChainId) {
        if let Some(stream) = self.streams.get_mut(&chain) {
            if !stream.completed {
                stream.cancelled = true;
            }
        }
    }

    fn kv_usage_pct(&mut self) -> Option<f64> {
        let active_tokens: u64 = self
            .streams
            .values()
            .filter(|s| !s.cancelled && !s.completed)
            .map(|s| s.delivered_tokens)
            .sum();
        Some((active_tokens as f64 / self.kv_capacity_tokens as f64 * 100.0).min(100.0))
    }

    fn is_scripted(&self) -> bool {
        true
    }
}
