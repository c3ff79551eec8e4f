use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_responses, BackendDescriptor, MaskQuery, MaskResponse, MaskedLm};
use crate::error::BackendError;

/// Request body: one entry per query, order-preserving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub sequences: Vec<WireSequence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSequence {
    pub words: Vec<String>,
    pub mask_start: usize,
    pub mask_len: usize,
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub results: Vec<WireResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResult {
    pub log_probs: Vec<f64>,
}

impl From<&MaskQuery> for WireSequence {
    fn from(q: &MaskQuery) -> Self {
        WireSequence {
            words: q.words.clone(),
            mask_start: q.masked_span.start,
            mask_len: q.masked_span.len(),
            targets: q.targets.clone(),
        }
    }
}

impl WireRequest {
    pub fn from_queries(queries: &[MaskQuery]) -> Self {
        WireRequest {
            sequences: queries.iter().map(WireSequence::from).collect(),
        }
    }

    /// Compact JSON body as sent on the wire.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("request serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    pub url: String,
    pub timeout_ms: u64,
    pub retries: usize,
    pub max_batch: usize,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_ms: 30_000,
            retries: 2,
            max_batch: 64,
        }
    }
}

/// Client for an MLM served over HTTP: one JSON POST per batch.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn post_once(&self, body: &[u8]) -> Result<Vec<u8>, Attempt> {
        let mut resp = self
            .agent
            .post(&self.config.url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| Attempt::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(Attempt::Fatal(BackendError::Status(status)));
        }
        resp.body_mut()
            .read_to_vec()
            .map_err(|e| Attempt::Transport(e.to_string()))
    }
}

enum Attempt {
    Transport(String),
    Fatal(BackendError),
}

impl MaskedLm for RemoteBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: format!("remote:{}", self.config.url),
            differentiable: false,
            thread_safe: true,
            max_batch: self.config.max_batch,
        }
    }

    fn fill_log_probs(&self, queries: &[MaskQuery]) -> Result<Vec<MaskResponse>, BackendError> {
        if queries.len() > self.config.max_batch {
            return Err(BackendError::Request(format!(
                "batch of {} exceeds max_batch {}",
                queries.len(),
                self.config.max_batch
            )));
        }
        for q in queries {
            q.validate()?;
        }
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        let body = WireRequest::from_queries(queries).to_bytes();
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        let mut reply = None;
        for _ in 0..attempts {
            match self.post_once(&body) {
                Ok(bytes) => {
                    reply = Some(bytes);
                    break;
                }
                Err(Attempt::Transport(msg)) => last = msg,
                Err(Attempt::Fatal(e)) => return Err(e),
            }
        }
        let bytes = reply.ok_or(BackendError::Transport {
            message: last,
            attempts,
        })?;
        let parsed: WireResponse = serde_json::from_slice(&bytes)
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        let responses: Vec<MaskResponse> = parsed
            .results
            .into_iter()
            .map(|r| MaskResponse {
                per_word_log_prob: r.log_probs,
            })
            .collect();
        check_responses(queries, &responses, 0)?;
        Ok(responses)
    }
}
