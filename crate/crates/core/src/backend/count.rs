use std::collections::{BTreeSet, HashMap};

use super::{BackendDescriptor, MaskQuery, MaskResponse, MaskedLm};
use crate::datasets::Words;
use crate::error::{BackendError, Error, Result};

/// Log-probability reported for zero-probability words.
pub const LOG_PROB_FLOOR: f64 = -745.0;

const BOS: &str = "<s>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    /// `P(w) = (c(w) + k) / (N + k|V|)`, ignoring context.
    Unigram,
    /// `P(w | l) = (c(l, w) + k) / (c(l, ·) + k|V|)` where `l` is the word just
    /// left of the masked span (`<s>` at sequence start).
    Bigram,
}

/// Additive-smoothing count model. Deterministic and context-free in
/// unigram mode, which makes scores checkable by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct CountBackend {
    mode: CountMode,
    smoothing: f64,
    unigrams: HashMap<String, u64>,
    bigrams: HashMap<(String, String), u64>,
    left_totals: HashMap<String, u64>,
    total: u64,
    vocab_size: usize,
    max_batch: usize,
}

impl CountBackend {
    pub fn fit(corpus: &[Words], smoothing_k: f64, mode: CountMode) -> Result<Self> {
        if corpus.iter().all(Vec::is_empty) {
            return Err(Error::argument("count backend needs a non-empty corpus"));
        }
        if !(smoothing_k >= 0.0 && smoothing_k.is_finite()) {
            return Err(Error::argument(format!("invalid smoothing k = {smoothing_k}")));
        }
        let mut unigrams = HashMap::new();
        let mut bigrams = HashMap::new();
        let mut left_totals = HashMap::new();
        let mut total = 0;
        let mut vocab = BTreeSet::new();
        for sentence in corpus {
            let mut prev = BOS;
            for w in sentence {
                *unigrams.entry(w.clone()).or_insert(0) += 1;
                *bigrams.entry((prev.to_string(), w.clone())).or_insert(0) += 1;
                *left_totals.entry(prev.to_string()).or_insert(0) += 1;
                vocab.insert(w.as_str());
                total += 1;
                prev = w;
            }
        }
        Ok(Self {
            mode,
            smoothing: smoothing_k,
            vocab_size: vocab.len(),
            unigrams,
            bigrams,
            left_totals,
            total,
            max_batch: 256,
        })
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }

    pub fn mode(&self) -> CountMode {
        self.mode
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn probability(&self, word: &str, left: Option<&str>) -> f64 {
        let k = self.smoothing;
        let v = self.vocab_size as f64;
        let (num, den) = match self.mode {
            CountMode::Unigram => (
                self.unigrams.get(word).copied().unwrap_or(0) as f64,
                self.total as f64,
            ),
            CountMode::Bigram => {
                let l = left.unwrap_or(BOS);
                (
                    self.bigrams
                        .get(&(l.to_string(), word.to_string()))
                        .copied()
                        .unwrap_or(0) as f64,
                    self.left_totals.get(l).copied().unwrap_or(0) as f64,
                )
            }
        };
        let den = den + k * v;
        if den <= 0.0 {
            0.0
        } else {
            (num + k) / den
        }
    }

    pub fn log_probability(&self, word: &str, left: Option<&str>) -> f64 {
        let p = self.probability(word, left);
        if p > 0.0 {
            p.ln().max(LOG_PROB_FLOOR)
        } else {
            LOG_PROB_FLOOR
        }
    }
}

impl MaskedLm for CountBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: match self.mode {
                CountMode::Unigram => "count-unigram".into(),
                CountMode::Bigram => "count-bigram".into(),
            },
            differentiable: false,
            thread_safe: true,
            max_batch: self.max_batch,
        }
    }

    fn fill_log_probs(
        &self,
        queries: &[MaskQuery],
    ) -> std::result::Result<Vec<MaskResponse>, BackendError> {
        queries
            .iter()
            .map(|q| {
                q.validate()?;
                let left = q
                    .masked_span
                    .start
                    .checked_sub(1)
                    .map(|i| q.words[i].as_str());
                Ok(MaskResponse {
                    per_word_log_prob: q
                        .targets
                        .iter()
                        .map(|t| self.log_probability(t, left))
                        .collect(),
                })
            })
            .collect()
    }
}
