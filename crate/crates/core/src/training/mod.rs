//! Margin-loss fine-tuning of a differentiable backend on the sequence score,
//! plus the multi-seed stability protocol.

mod loss;
mod schedule;
mod stability;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{fill_chunked, DifferentiableLm};
use crate::casting::CastConfig;
use crate::datasets::{Example, ExampleSet};
use crate::error::{BackendError, Error, Result};
use crate::scoring::{full_text_inputs, rank, RankerConfig, ScoringPlan, Target};

pub use loss::{margin_loss, margin_loss_grad};
pub use schedule::{lr_at, warmup_steps};
pub use stability::{stability_study, RunReport, SeedFailure, SeedResult};

pub const DEFAULT_ETA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginLossConfig {
    pub eta: f64,
    pub target: Target,
    pub grams: usize,
}

impl Default for MarginLossConfig {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            target: Target::Premise,
            grams: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub train_fraction: f64,
}

impl TrainConfig {
    /// Hyper-parameters recommended for fine-tuning a large pre-trained MLM
    /// with an adaptive optimizer. Far too small a step for the desk-scale
    /// backend under plain gradient descent; see [`Default`].
    pub fn large_model() -> Self {
        Self {
            learning_rate: 1e-5,
            warmup_ratio: 0.06,
            weight_decay: 0.01,
            batch_size: 8,
            epochs: 10,
            seed: 0,
            train_fraction: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.warmup_ratio)
            && self.weight_decay >= 0.0
            && self.batch_size >= 1
            && self.epochs >= 1
            && self.train_fraction > 0.0
            && self.train_fraction <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::argument(format!("invalid training config {self:?}")))
        }
    }

    pub fn lr_at(&self, step: usize, total_steps: usize) -> Result<f64> {
        lr_at(step, total_steps, self.learning_rate, self.warmup_ratio)
    }
}

/// Desk-scale defaults: same schedule shape and weight decay, a learning
/// rate sized for plain gradient descent on the tiny backend.
impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 30,
            ..Self::large_model()
        }
    }
}

/// The three compared fine-tuning settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    /// Margin loss on the sequence score, reusing the MLM head.
    Ours,
    /// Fresh linear head, cross-entropy, separated-sentence inputs.
    HeadCe,
    /// Fresh linear head, margin loss, full-text inputs.
    HeadMargin,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::Ours, Setting::HeadCe, Setting::HeadMargin];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Ours => "ours",
            Setting::HeadCe => "head-ce",
            Setting::HeadMargin => "head-margin",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(Setting::Ours),
            "head-ce" | "head_ce" => Ok(Setting::HeadCe),
            "head-margin" | "head_margin" => Ok(Setting::HeadMargin),
            other => Err(Error::argument(format!("unknown setting {other:?}"))),
        }
    }
}

/// A model trainable by [`fit`]: flat parameters, a per-example loss with
/// gradient, and a top-1 prediction.
pub trait Learner {
    fn parameters(&self) -> Vec<f64>;

    fn set_parameters(&mut self, params: &[f64]);

    fn num_parameters(&self) -> usize;

    /// Loss on `example`, adding its gradient into `grad`.
    fn accumulate(&self, example: &Example, grad: &mut [f64]) -> Result<f64>;

    fn predict(&self, example: &Example) -> Result<usize>;

    /// `θ ← θ − lr·g − lr·λ·θ` (weight decay decoupled from the gradient).
    fn apply_update(&mut self, grad: &[f64], lr: f64, weight_decay: f64);
}

pub(crate) fn sgd_step(params: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g + lr * weight_decay * *p;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub total_steps: usize,
    pub history: Vec<EpochRecord>,
}

/// Top-1 accuracy over the labeled examples of `set`.
pub fn accuracy<L: Learner + ?Sized>(learner: &L, set: &ExampleSet) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for ex in set {
        if let Some(gold) = ex.gold_index {
            total += 1;
            if learner.predict(ex)? == gold {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::argument("accuracy over a set with no labeled examples"));
    }
    Ok(correct as f64 / total as f64)
}

/// Mini-batch training with the warm-up/decay schedule. After each epoch the
/// validation accuracy is measured and the best parameters (earliest on
/// ties) are restored at the end.
pub fn fit<L: Learner + ?Sized>(
    learner: &mut L,
    train: &ExampleSet,
    val: &ExampleSet,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::argument("training and validation sets must be non-empty"));
    }
    if let Some(ex) = train.iter().find(|e| e.gold_index.is_none()) {
        return Err(Error::argument(format!(
            "training example {} has no gold label",
            ex.id
        )));
    }
    let train = train.subsample(config.train_fraction, config.seed)?;
    let examples = train.examples();
    let steps_per_epoch = examples.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad = vec![0.0; learner.num_parameters()];
    let mut step = 0;
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += learner
                    .accumulate(&examples[i], &mut grad)
                    .map_err(|e| as_divergence(e, step).in_example(&examples[i].id))?;
            }
            let scale = 1.0 / batch.len() as f64;
            batch_loss *= scale;
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    step,
                    loss: batch_loss,
                });
            }
            grad.iter_mut().for_each(|g| *g *= scale);
            let lr = config.lr_at(step, total_steps)?;
            learner.apply_update(&grad, lr, config.weight_decay);
            if learner.parameters().iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged {
                    step,
                    loss: batch_loss,
                });
            }
            loss_sum += batch_loss * batch.len() as f64;
            step += 1;
        }
        let train_accuracy = accuracy(learner, &train).map_err(|e| as_divergence(e, step))?;
        let val_accuracy = accuracy(learner, val).map_err(|e| as_divergence(e, step))?;
        history.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / examples.len() as f64,
            train_accuracy,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(_, acc, _)| val_accuracy > *acc) {
            best = Some((epoch, val_accuracy, learner.parameters()));
        }
    }
    let (best_epoch, best_val_accuracy, params) = best.expect("at least one epoch");
    learner.set_parameters(&params);
    Ok(TrainOutcome {
        best_epoch,
        best_val_accuracy,
        total_steps,
        history,
    })
}

/// Non-finite model outputs mean the parameters have blown up.
fn as_divergence(err: Error, step: usize) -> Error {
    match err.root() {
        Error::Backend(BackendError::InvalidValue { value, .. }) if !value.is_finite() => {
            Error::Diverged { step, loss: *value }
        }
        _ => err,
    }
}

/// Fine-tunes a backend on the sequence score itself: every hypothesis of an
/// example is scored by the same parameters and the scores feed the margin
/// loss.
#[derive(Debug, Clone)]
pub struct SsmLearner<B> {
    pub backend: B,
    pub loss: MarginLossConfig,
    pub casting: CastConfig,
}

impl<B: DifferentiableLm> SsmLearner<B> {
    pub fn new(backend: B, loss: MarginLossConfig, casting: CastConfig) -> Self {
        Self {
            backend,
            loss,
            casting,
        }
    }

    fn ranker(&self) -> RankerConfig {
        RankerConfig {
            target: self.loss.target,
            grams: self.loss.grams,
            swap_conjunction: false,
        }
    }

    /// Margin loss of one example and its gradient with respect to the
    /// backend parameters.
    pub fn loss_and_gradient(&self, example: &Example, grad: &mut [f64]) -> Result<f64> {
        let gold = example
            .gold_index
            .ok_or_else(|| Error::argument(format!("example {} has no gold label", example.id)))?;
        let inputs = full_text_inputs(example, &self.casting, false)?;
        let plan = ScoringPlan::build(&inputs, self.loss.target, self.loss.grams)?;
        let responses = fill_chunked(&self.backend, &plan.queries)?;
        let scores: Vec<f64> = plan.reduce(&responses).iter().map(|b| b.combined).collect();
        let loss = margin_loss(&scores, gold, self.loss.eta)?;
        let d_scores = margin_loss_grad(&scores, gold, self.loss.eta)?;
        if d_scores.iter().all(|&g| g == 0.0) {
            return Ok(loss);
        }
        let upstream: Vec<Vec<f64>> = plan
            .entries
            .iter()
            .zip(&plan.queries)
            .map(|(e, q)| vec![d_scores[e.input] * e.weight; q.span_len()])
            .collect();
        self.backend
            .accumulate_log_prob_gradient(&plan.queries, &upstream, grad)?;
        Ok(loss)
    }
}

impl<B: DifferentiableLm> Learner for SsmLearner<B> {
    fn parameters(&self) -> Vec<f64> {
        self.backend.parameters().to_vec()
    }

    fn set_parameters(&mut self, params: &[f64]) {
        self.backend.parameters_mut().copy_from_slice(params);
    }

    fn num_parameters(&self) -> usize {
        self.backend.parameters().len()
    }

    fn accumulate(&self, example: &Example, grad: &mut [f64]) -> Result<f64> {
        self.loss_and_gradient(example, grad)
    }

    fn predict(&self, example: &Example) -> Result<usize> {
        Ok(rank(example, &self.ranker(), &self.casting, &self.backend)?.winner())
    }

    fn apply_update(&mut self, grad: &[f64], lr: f64, weight_decay: f64) {
        sgd_step(self.backend.parameters_mut(), grad, lr, weight_decay);
    }
}

/// Fine-tune `backend` with the margin loss on the sequence score. Returns
/// the backend holding the best-validation parameters.
pub fn train_ssm<B: DifferentiableLm>(
    train: &ExampleSet,
    val: &ExampleSet,
    backend: B,
    loss: &MarginLossConfig,
    config: &TrainConfig,
    casting: &CastConfig,
) -> Result<(B, TrainOutcome)> {
    if !backend.descriptor().differentiable {
        return Err(Error::argument("train_ssm needs a differentiable backend"));
    }
    let mut learner = SsmLearner::new(backend, *loss, casting.clone());
    let outcome = fit(&mut learner, train, val, config)?;
    Ok((learner.backend, outcome))
}
