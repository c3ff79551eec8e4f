//! Plausibility ranking with masked language model sequence scoring.
//!
//! Premise/hypothesis pairs are cast into a single full-text sequence, words
//! of the premise (or hypothesis) are masked one window at a time, and the
//! model's reconstruction log-probabilities are summed into a score. The same
//! score can be fine-tuned directly with a margin ranking loss.

pub mod backend;
pub mod baselines;
pub mod casting;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod report;
pub mod scoring;
pub mod training;

pub use error::{BackendError, Error, Result};
