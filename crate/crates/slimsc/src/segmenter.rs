//! Incremental segmentation of streamed chain text into thoughts.
//!
//! A thought ends where a stop word ("Alternatively", "Wait", "Another",
//! ...) starts at a word boundary; the stop word opens the next thought.
//! Matching is case-sensitive and chunk-safe: a stop word split across
//! two stream deltas is found once the second delta arrives, and a match
//! flush against the end of the buffer is deferred until the following
//! character confirms the word boundary ("Wait" must not fire on the
//! prefix of "Waiting"). Segmentation is lossless: emitted thoughts plus
//! the residual buffer reproduce the ingested text byte for byte.
//!
//! The module also owns the analysis-step clocks: the real-time step
//! counter driven by the orchestrator timer, and the token clock used in
//! replay mode (one step per 100 generated tokens).

use crate::chain::ChainId;

/// Incremental splitter for one chain's reasoning stream.
#[derive(Debug, Clone)]
pub struct ThoughtSegmenter {
    pub chain_id: ChainId,
    stop_words: Vec<String>,
    end_marker: Option<String>,
    buffer: String,
    emitted_count: usize,
    reasoning_ended: bool,
}

impl ThoughtSegmenter {
    pub fn new(chain_id: ChainId, stop_words: Vec<String>, end_marker: Option<String>) -> Self {
        Self {
            chain_id,
            stop_words: stop_words.into_iter().filter(|w| !w.is_empty()).collect(),
            end_marker: end_marker.filter(|m| !m.is_empty()),
            buffer: String::new(),
            emitted_count: 0,
            reasoning_ended: false,
        }
    }

    pub fn emitted_count(&self) -> usize {
        self.emitted_count
    }

    pub fn reasoning_ended(&self) -> bool {
        self.reasoning_ended
    }

    /// Residual text not yet emitted as a thought.
    pub fn pending(&self) -> &str {
        &self.buffer
    }

    /// Feeds the newest stream delta; returns zero or more completed
    /// thought texts. Once the end-of-reasoning marker has been seen,
    /// further deltas are ignored (they belong to the answer phase).
    pub fn ingest(&mut self, delta: &str) -> Vec<String> {
        if self.reasoning_ended || delta.is_empty() {
            return Vec::new();
        }
        self.buffer.push_str(delta);

        if let Some(marker) = self.end_marker.clone() {
            if let Some(pos) = self.buffer.find(&marker) {
                let reasoning: String = self.buffer[..pos].to_string();
                self.buffer.clear();
                self.reasoning_ended = true;
                return self.drain_final(reasoning);
            }
        }
        self.scan_pending()
    }

    /// Flushes the residual buffer at stream end as a final thought.
    pub fn finish(&mut self) -> Vec<String> {
        if self.reasoning_ended {
            return Vec::new();
        }
        self.reasoning_ended = true;
        let rest = std::mem::take(&mut self.buffer);
        self.drain_final(rest)
    }

    /// Splits `text` knowing no further characters will arrive, then
    /// flushes the tail as the last thought.
    fn drain_final(&mut self, text: String) -> Vec<String> {
        let mut out = Vec::new();
        let mut rest = text.as_str();
        while let Some(pos) = find_split(rest, &self.stop_words, true) {
            out.push(rest[..pos].to_string());
            rest = &rest[pos..];
        }
        if !rest.trim().is_empty() {
            out.push(rest.to_string());
        }
        self.emitted_count += out.len();
        out
    }

    /// Splits the live buffer, deferring matches that touch the buffer end.
    fn scan_pending(&mut self) -> Vec<String> {
        let mut out = Vec::new();
        while let Some(pos) = find_split(&self.buffer, &self.stop_words, false) {
            let head: String = self.buffer[..pos].to_string();
            self.buffer.drain(..pos);
            out.push(head);
        }
        self.emitted_count += out.len();
        out
    }
}

/// Finds the earliest position > 0 where a stop word starts at a word
/// boundary. With `at_end`, the end of `text` counts as a confirming
/// boundary; otherwise a match flush against the end is not yet
/// confirmable (the next delta could extend the word) and is skipped.
fn find_split(text: &str, stop_words: &[String], at_end: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for word in stop_words {
        let mut from = 0;
        while let Some(rel) = text[from..].find(word.as_str()) {
            let pos = from + rel;
            from = pos + 1;
            if pos == 0 {
                continue; // the current thought already starts with it
            }
            if text[..pos].chars().next_back().is_some_and(|c| c.is_alphanumeric()) {
                continue; // mid-word, e.g. "Kuwait"
            }
            let end = pos + word.len();
            match text[end..].chars().next() {
                Some(c) if c.is_alphanumeric() => continue, // e.g. "Waiting"
                Some(_) => {}
                None if at_end => {}
                None => continue, // unconfirmed: wait for the next delta
            }
            if best.is_none_or(|b| pos < b) {
                best = Some(pos);
            }
            break; // earlier occurrences of this word are exhausted
        }
    }
    best
}

/// Accumulates segmenter output until a thought reaches the minimum
/// length, merging degenerate fragments into the next thought before they
/// ever reach the embedder.
#[derive(Debug, Clone, Default)]
pub struct ThoughtMerger {
    min_chars: usize,
    pending: String,
}

impl ThoughtMerger {
    pub fn new(min_chars: usize) -> Self {
        Self {
            min_chars,
            pending: String::new(),
        }
    }

    /// Adds one raw segment; returns the merged thought once it is long
    /// enough.
    pub fn push(&mut self, segment: &str) -> Option<String> {
        self.pending.push_str(segment);
        if self.pending.chars().count() >= self.min_chars {
            Some(std::mem::take(&mut self.pending))
        } else {
            None
        }
    }

    /// Emits whatever is pending at end of reasoning, regardless of length.
    pub fn flush(&mut self) -> Option<String> {
        if self.pending.is_empty() {
            None
        } else {
            Some(std::mem::take(&mut self.pending))
        }
    }
}

/// Global analysis-step counter driven by the orchestrator timer.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepClock {
    current: u64,
}

impl StepClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Advances to the next analysis step and returns its ordinal
    /// (first call returns 1).
    pub fn advance(&mut self) -> u64 {
        self.current += 1;
        self.current
    }

    pub fn current(&self) -> u64 {
        self.current
    }
}

/// Token-driven step clock for replay mode: one analysis step per
/// `tokens_per_step` generated tokens.
#[derive(Debug, Clone, Copy)]
pub struct TokenClock {
    tokens_per_step: u64,
    tokens_seen: u64,
}

impl TokenClock {
    pub fn new(tokens_per_step: u64) -> Self {
        assert!(tokens_per_step > 0);
        Self {
            tokens_per_step,
            tokens_seen: 0,
        }
    }

    /// Records `tokens` more generated tokens; returns the current step.
    pub fn advance_tokens(&mut self, tokens: u64) -> u64 {
        self.tokens_seen += tokens;
        self.current()
    }

    pub fn current(&self) -> u64 {
        self.tokens_seen / self.tokens_per_step
    }

    /// Step that a token offset falls into under this clock.
    pub fn step_for_offset(&self, offset: u64) -> u64 {
        offset / self.tokens_per_step
    }
}
