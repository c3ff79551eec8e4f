//! Masked language model backends.
//!
//! A backend answers [`MaskQuery`]s: given a word sequence with one
//! contiguous span masked, return the natural-log probability of each
//! original word at its masked position, all span words masked at once.
//! Backends own tokenization; the built-in ones are word-level.

mod count;
mod remote;
mod tiny;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::datasets::Words;
use crate::error::{BackendError, Result};

pub use count::{CountBackend, CountMode, LOG_PROB_FLOOR};
pub use remote::{
    RemoteBackend, RemoteConfig, WireRequest, WireResponse, WireResult, WireSequence,
};
pub use tiny::{TinyBackend, Vocab, CHECKPOINT_HEADER, UNK};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskQuery {
    pub words: Words,
    pub masked_span: Range<usize>,
    pub targets: Words,
}

impl MaskQuery {
    /// Mask `span` of `words`; the targets are the words under the span.
    pub fn new(words: Words, span: Range<usize>) -> std::result::Result<Self, BackendError> {
        if span.start >= span.end || span.end > words.len() {
            return Err(BackendError::Request(format!(
                "mask span {span:?} invalid for {} words",
                words.len()
            )));
        }
        let targets = words[span.clone()].to_vec();
        Ok(Self {
            words,
            masked_span: span,
            targets,
        })
    }

    pub fn validate(&self) -> std::result::Result<(), BackendError> {
        let span = &self.masked_span;
        if span.start >= span.end || span.end > self.words.len() {
            return Err(BackendError::Request(format!(
                "mask span {span:?} invalid for {} words",
                self.words.len()
            )));
        }
        if self.targets.len() != span.len() {
            return Err(BackendError::Request(format!(
                "{} targets for a span of {}",
                self.targets.len(),
                span.len()
            )));
        }
        Ok(())
    }

    pub fn span_len(&self) -> usize {
        self.masked_span.len()
    }

    /// Words visible to the model (everything outside the masked span).
    pub fn context(&self) -> impl Iterator<Item = &String> {
        self.words[..self.masked_span.start]
            .iter()
            .chain(&self.words[self.masked_span.end..])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskResponse {
    pub per_word_log_prob: Vec<f64>,
}

impl MaskResponse {
    pub fn total(&self) -> f64 {
        self.per_word_log_prob.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub differentiable: bool,
    pub thread_safe: bool,
    pub max_batch: usize,
}

pub trait MaskedLm: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    /// One response per query, in query order. Callers keep
    /// `queries.len() <= max_batch`; see [`fill_chunked`].
    fn fill_log_probs(
        &self,
        queries: &[MaskQuery],
    ) -> std::result::Result<Vec<MaskResponse>, BackendError>;

    fn as_differentiable(&self) -> Option<&dyn DifferentiableLm> {
        None
    }
}

/// A backend with trainable parameters held as one flat vector.
pub trait DifferentiableLm: MaskedLm {
    fn parameters(&self) -> &[f64];

    fn parameters_mut(&mut self) -> &mut [f64];

    /// Add to `grad` the gradient of `Σ_q Σ_j upstream[q][j] · log_prob[q][j]`.
    fn accumulate_log_prob_gradient(
        &self,
        queries: &[MaskQuery],
        upstream: &[Vec<f64>],
        grad: &mut [f64],
    ) -> Result<()>;

    /// Width of [`pooled`](Self::pooled).
    fn representation_dim(&self) -> usize;

    /// Mean of the per-word context representations of `words`.
    fn pooled(&self, words: &[String]) -> Vec<f64>;

    /// Add to `grad` the gradient of `upstream · pooled(words)`.
    fn accumulate_pooled_gradient(&self, words: &[String], upstream: &[f64], grad: &mut [f64]);
}

/// Run `queries` through `backend` in chunks of at most `max_batch`,
/// checking response arity and that every log-prob is finite and `<= 0`.
pub fn fill_chunked(
    backend: &dyn MaskedLm,
    queries: &[MaskQuery],
) -> std::result::Result<Vec<MaskResponse>, BackendError> {
    let max_batch = backend.descriptor().max_batch.max(1);
    let mut out = Vec::with_capacity(queries.len());
    for (c, chunk) in queries.chunks(max_batch).enumerate() {
        let responses = backend.fill_log_probs(chunk)?;
        check_responses(chunk, &responses, c * max_batch)?;
        out.extend(responses);
    }
    Ok(out)
}

pub(crate) fn check_responses(
    queries: &[MaskQuery],
    responses: &[MaskResponse],
    offset: usize,
) -> std::result::Result<(), BackendError> {
    if responses.len() != queries.len() {
        return Err(BackendError::Malformed(format!(
            "{} responses for {} queries",
            responses.len(),
            queries.len()
        )));
    }
    for (i, (q, r)) in queries.iter().zip(responses).enumerate() {
        if r.per_word_log_prob.len() != q.span_len() {
            return Err(BackendError::Malformed(format!(
                "query {}: {} log-probs for a span of {}",
                offset + i,
                r.per_word_log_prob.len(),
                q.span_len()
            )));
        }
        for (j, &v) in r.per_word_log_prob.iter().enumerate() {
            if !v.is_finite() || v > 0.0 {
                return Err(BackendError::InvalidValue {
                    query: offset + i,
                    word: j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}
