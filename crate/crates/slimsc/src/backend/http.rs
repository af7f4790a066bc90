//! HTTP backend for OpenAI-compatible streaming completions.
//!
//! Each chain is one `POST {endpoint}` with `"stream": true`; the SSE
//! response is consumed on a background task that forwards deltas into a
//! channel drained by the orchestrator's poll loop. Cancelling a chain
//! aborts its task, which drops the connection and stops token
//! production on the server. KV-cache usage comes from a Prometheus-style
//! metrics endpoint when one is configured.

use futures_util::StreamExt;
use serde_json::{json, Value};
use std::collections::HashMap;
use std::sync::mpsc;
use std::sync::Arc;

use super::{BackendError, ChainSession, GenerationBackend, StreamEvent};
use crate::chain::{ChainId, SamplingParams};

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Full URL of the completions endpoint,
    /// e.g. `http://host:8000/v1/completions`.
    pub endpoint: String,
    pub model_name: String,
    pub api_key: Option<String>,
    /// Prometheus metrics endpoint of the serving engine, when available.
    pub metrics_url: Option<String>,
    /// Name of the cache-usage gauge scraped from the metrics endpoint.
    pub kv_gauge: String,
    pub request_timeout_secs: u64,
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            api_key: None,
            metrics_url: None,
            kv_gauge: "vllm:gpu_cache_usage_perc".to_string(),
            request_timeout_secs: 600,
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    runtime: Arc<tokio::runtime::Runtime>,
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let runtime = tokio::runtime::Runtime::new()
            .map_err(|e| BackendError::Config(format!("tokio runtime: {e}")))?;
        let client = reqwest::Client::builder()
            .timeout(std::time::Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(Self {
            config,
            runtime: Arc::new(runtime),
            client,
        })
    }
}

impl HttpBackend {
    /// Checks that the completions endpoint answers at all. Any HTTP
    /// response counts as reachable; only transport-level failures error.
    pub fn probe(&self) -> Result<(), BackendError> {
        let client = self.client.clone();
        let url = self.config.endpoint.clone();
        self.runtime.block_on(async move {
            client
                .get(&url)
                .timeout(std::time::Duration::from_secs(10))
                .send()
                .await
                .map(|_| ())
                .map_err(|e| BackendError::Transport(format!("cannot reach {url}: {e}")))
        })
    }
}

impl GenerationBackend for HttpBackend {
    fn session(&self, _question_id: &str) -> Result<Box<dyn ChainSession>, BackendError> {
        Ok(Box::new(HttpSession {
            config: self.config.clone(),
            runtime: self.runtime.clone(),
            client: self.client.clone(),
            streams: HashMap::new(),
        }))
    }
}

struct HttpStream {
    rx: mpsc::Receiver<StreamEvent>,
    task: tokio::task::JoinHandle<()>,
    cancelled: bool,
    finished: bool,
}

impl Drop for HttpStream {
    fn drop(&mut self) {
        // A dropped session must not leave detached streams generating
        // tokens on the server.
        self.task.abort();
    }
}

pub struct HttpSession {
    config: HttpBackendConfig,
    runtime: Arc<tokio::runtime::Runtime>,
    client: reqwest::Client,
    streams: HashMap<ChainId, HttpStream>,
}

impl ChainSession for HttpSession {
    fn start_chain(
        &mut self,
        chain: ChainId,
        prompt: &str,
        sampling: &SamplingParams,
        _at_step: u64,
    ) -> Result<(), BackendError> {
        let (tx, rx) = mpsc::channel();
        let client = self.client.clone();
        let config = self.config.clone();
        let prompt = prompt.to_string();
        let sampling = sampling.clone();
        let task = self.runtime.spawn(async move {
            stream_completion(client, config, prompt, sampling, tx).await;
        });
        self.streams.insert(
            chain,
            HttpStream {
                rx,
                task,
                cancelled: false,
                finished: false,
            },
        );
        Ok(())
    }

    fn poll(&mut self, chain: ChainId, _current_step: u64) -> Vec<StreamEvent> {
        let Some(stream) = self.streams.get_mut(&chain) else {
            return Vec::new();
        };
        if stream.cancelled || stream.finished {
            return Vec::new();
        }
        let mut out = Vec::new();
        while let Ok(event) = stream.rx.try_recv() {
            if matches!(event, StreamEvent::Completed | StreamEvent::Failed { .. }) {
                stream.finished = true;
                out.push(event);
                break;
            }
            out.push(event);
        }
        out
    }

    fn cancel(&mut self, chain: ChainId) {
        if let Some(stream) = self.streams.get_mut(&chain) {
            if !stream.finished && !stream.cancelled {
                stream.cancelled = true;
                stream.task.abort();
                // Drop anything already queued; the chain is dead.
                while stream.rx.try_recv().is_ok() {}
            }
        }
    }

    fn kv_usage_pct(&mut self) -> Option<f64> {
        let url = self.config.metrics_url.clone()?;
        let client = self.client.clone();
        let gauge = self.config.kv_gauge.clone();
        let text = self
            .runtime
            .block_on(async move {
                let resp = client
                    .get(&url)
                    .timeout(std::time::Duration::from_secs(5))
                    .send()
                    .await
                    .ok()?;
                resp.text().await.ok()
            })?;
        parse_prometheus_gauge(&text, &gauge).map(normalize_gauge_pct)
    }

    fn is_scripted(&self) -> bool {
        false
    }
}

async fn stream_completion(
    client: reqwest::Client,
    config: HttpBackendConfig,
    prompt: String,
    sampling: SamplingParams,
    tx: mpsc::Sender<StreamEvent>,
) {
    let body = json!({
        "model": config.model_name,
        "prompt": prompt,
        "stream": true,
        "temperature": sampling.temperature,
        "top_p": sampling.top_p,
        "max_tokens": sampling.max_tokens,
        "stream_options": {"include_usage": true},
    });
    let mut req = client.post(&config.endpoint).json(&body);
    if let Some(key) = &config.api_key {
        req = req.bearer_auth(key);
    }
    let resp = match req.send().await {
        Ok(resp) => resp,
        Err(e) => {
            let _ = tx.send(StreamEvent::Failed { error: e.to_string() });
            return;
        }
    };
    if !resp.status().is_success() {
        let status = resp.status();
        let body = resp.text().await.unwrap_or_default();
        let _ = tx.send(StreamEvent::Failed {
            error: format!("completions endpoint returned {status}: {body}"),
        });
        return;
    }
    let mut stream = resp.bytes_stream();
    let mut parser = SseParser::default();
    let mut accounting = TokenAccounting::default();
    while let Some(chunk) = stream.next().await {
        let bytes = match chunk {
            Ok(bytes) => bytes,
            Err(e) => {
                let _ = tx.send(StreamEvent::Failed { error: e.to_string() });
                return;
            }
        };
        for payload in parser.feed(&bytes) {
            if payload == "[DONE]" {
                let _ = tx.send(StreamEvent::Completed);
                return;
            }
            if let Some((text, tokens)) = accounting.delta_from_payload(&payload) {
                let _ = tx.send(StreamEvent::Delta { text, tokens });
            }
        }
    }
    let _ = tx.send(StreamEvent::Completed);
}

/// Splits a byte stream into SSE `data:` payloads. Chunks may cut lines
/// (and UTF-8 code points) anywhere, so bytes are buffered until a full
/// line is available.
#[derive(Debug, Default)]
pub struct SseParser {
    buf: Vec<u8>,
}

impl SseParser {
    pub fn feed(&mut self, bytes: &[u8]) -> Vec<String> {
        self.buf.extend_from_slice(bytes);
        let mut payloads = Vec::new();
        while let Some(pos) = self.buf.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = self.buf.drain(..=pos).collect();
            let line = String::from_utf8_lossy(&line);
            let line = line.trim_end_matches(['\n', '\r']);
            if let Some(rest) = line.strip_prefix("data:") {
                let payload = rest.trim_start();
                if !payload.is_empty() {
                    payloads.push(payload.to_string());
                }
            }
        }
        payloads
    }
}

/// Derives per-delta token counts from streamed payloads. When the server
/// reports cumulative `usage.completion_tokens` the exact difference is
/// used; otherwise each non-empty text delta counts as one token (the
/// completions API emits roughly one token per chunk).
#[derive(Debug, Default)]
pub struct TokenAccounting {
    reported_tokens: u64,
}

impl TokenAccounting {
    pub fn delta_from_payload(&mut self, payload: &str) -> Option<(String, u64)> {
        let value: Value = serde_json::from_str(payload).ok()?;
        let choice = value.get("choices").and_then(|c| c.get(0));
        let text = choice
            .and_then(|c| c.get("text").and_then(Value::as_str))
            .or_else(|| {
                choice
                    .and_then(|c| c.get("delta"))
                    .and_then(|d| d.get("content"))
                    .and_then(Value::as_str)
            })
            .unwrap_or("")
            .to_string();
        let usage_total = value
            .get("usage")
            .and_then(|u| u.get("completion_tokens"))
            .and_then(Value::as_u64);
        let tokens = match usage_total {
            Some(total) => {
                let delta = total.saturating_sub(self.reported_tokens);
                self.reported_tokens = total;
                delta
            }
            None if !text.is_empty() => {
                self.reported_tokens += 1;
                1
            }
            None => 0,
        };
        if text.is_empty() && tokens == 0 {
            return None;
        }
        Some((text, tokens))
    }
}

/// Extracts the value of a gauge from Prometheus text exposition format.
/// Labels are ignored; the last sample wins.
pub fn parse_prometheus_gauge(text: &str, gauge: &str) -> Option<f64> {
    let mut last = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let matches_gauge = line
            .strip_prefix(gauge)
            .is_some_and(|rest| rest.starts_with('{') || rest.starts_with(' '));
        if !matches_gauge {
            continue;
        }
        if let Some(value) = line.split_whitespace().last().and_then(|v| v.parse::<f64>().ok())
        {
            last = Some(value);
        }
    }
    last
}

/// Serving engines expose cache usage either as a 0..1 fraction or as a
/// percentage; normalize to percent and clamp.
fn normalize_gauge_pct(value: f64) -> f64 {
    let pct = if value <= 1.0 { value * 100.0 } else { value };
    pct.clamp(0.0, 100.0)
}
