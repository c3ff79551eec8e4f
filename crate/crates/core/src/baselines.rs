//! Classifier-head baselines: a freshly initialized linear head over the
//! backend's pooled representation, trained with cross-entropy on
//! separated-sentence inputs or with the margin loss on full-text inputs.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{DifferentiableLm, MaskedLm, TinyBackend};
use crate::casting::{CastConfig, FullTextInput, PairInput};
use crate::datasets::{Example, ExampleSet, Words};
use crate::error::{Error, Result};
use crate::scoring::rank_order;
use crate::training::{
    accuracy, fit, margin_loss, margin_loss_grad, sgd_step, stability_study, Learner,
    MarginLossConfig, RunReport, SeedResult, Setting, SsmLearner, TrainConfig, TrainOutcome,
};

/// Linear scorer `projection · pooled + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub projection: Vec<f64>,
    pub bias: f64,
    pub init_seed: u64,
}

impl HeadParams {
    pub fn init(dim: usize, init_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed ^ 0x6865_6164);
        let bound = 1.0 / (dim.max(1) as f64).sqrt();
        let unit = Uniform::new_inclusive(-bound, bound);
        Self {
            projection: (0..dim).map(|_| unit.sample(&mut rng)).collect(),
            bias: 0.0,
            init_seed,
        }
    }

    pub fn score(&self, pooled: &[f64]) -> Result<f64> {
        if pooled.len() != self.projection.len() {
            return Err(Error::argument(format!(
                "head dimension {} does not match representation dimension {}",
                self.projection.len(),
                pooled.len()
            )));
        }
        Ok(self.bias + self.projection.iter().zip(pooled).map(|(a, b)| a * b).sum::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeadInput {
    FullText(FullTextInput),
    Pair(PairInput),
}

impl HeadInput {
    pub fn words(&self) -> Words {
        match self {
            HeadInput::FullText(x) => x.words.clone(),
            HeadInput::Pair(p) => p.joined_words(),
        }
    }
}

/// Mean of the backend's per-word context representations.
pub fn pooled_representation(input: &HeadInput, backend: &dyn MaskedLm) -> Result<Vec<f64>> {
    let diff = backend.as_differentiable().ok_or_else(|| {
        Error::argument(format!(
            "backend {} has no pooled representation",
            backend.descriptor().name
        ))
    })?;
    Ok(diff.pooled(&input.words()))
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

fn check_candidates(logits: &[f64], gold_index: usize) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::argument(format!(
            "cross-entropy needs at least 2 candidates, got {}",
            logits.len()
        )));
    }
    if gold_index >= logits.len() {
        return Err(Error::argument(format!(
            "gold index {gold_index} out of range for {} candidates",
            logits.len()
        )));
    }
    Ok(())
}

/// `−log softmax(logits)[gold]` over the candidate set.
pub fn head_ce_loss(logits: &[f64], gold_index: usize) -> Result<f64> {
    check_candidates(logits, gold_index)?;
    Ok(-log_softmax(logits)[gold_index])
}

/// `softmax(logits) − onehot(gold)`.
pub fn head_ce_grad(logits: &[f64], gold_index: usize) -> Result<Vec<f64>> {
    check_candidates(logits, gold_index)?;
    let mut g: Vec<f64> = log_softmax(logits).into_iter().map(f64::exp).collect();
    g[gold_index] -= 1.0;
    Ok(g)
}

/// The margin loss applied to head scores.
pub fn head_margin_loss(scores: &[f64], gold_index: usize, eta: f64) -> Result<f64> {
    margin_loss(scores, gold_index, eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadSetting {
    HeadCe,
    HeadMargin,
}

impl HeadSetting {
    pub fn from_setting(setting: Setting) -> Result<Self> {
        match setting {
            Setting::HeadCe => Ok(HeadSetting::HeadCe),
            Setting::HeadMargin => Ok(HeadSetting::HeadMargin),
            Setting::Ours => Err(Error::argument("setting 'ours' has no classifier head")),
        }
    }

    pub fn setting(self) -> Setting {
        match self {
            HeadSetting::HeadCe => Setting::HeadCe,
            HeadSetting::HeadMargin => Setting::HeadMargin,
        }
    }

    /// Reject inputs cast in the wrong format for this setting.
    pub fn check_input(self, input: &HeadInput) -> Result<()> {
        match (self, input) {
            (HeadSetting::HeadCe, HeadInput::Pair(_))
            | (HeadSetting::HeadMargin, HeadInput::FullText(_)) => Ok(()),
            (HeadSetting::HeadCe, HeadInput::FullText(_)) => Err(Error::argument(
                "head-ce consumes separated-sentence inputs, got full-text",
            )),
            (HeadSetting::HeadMargin, HeadInput::Pair(_)) => Err(Error::argument(
                "head-margin consumes full-text inputs, got separated-sentence",
            )),
        }
    }

    pub fn cast(self, example: &Example, casting: &CastConfig) -> Result<Vec<HeadInput>> {
        (0..example.num_hypotheses())
            .map(|i| match self {
                HeadSetting::HeadCe => casting.to_separated_sentence(example, i).map(HeadInput::Pair),
                HeadSetting::HeadMargin => casting.to_full_text(example, i).map(HeadInput::FullText),
            })
            .collect()
    }
}

/// A pre-trained backend with a fresh linear head; both are trained.
#[derive(Debug, Clone)]
pub struct HeadLearner<B> {
    pub backend: B,
    pub head: HeadParams,
    pub setting: HeadSetting,
    pub eta: f64,
    pub casting: CastConfig,
}

impl<B: DifferentiableLm> HeadLearner<B> {
    pub fn new(backend: B, setting: HeadSetting, init_seed: u64, eta: f64, casting: CastConfig) -> Self {
        let head = HeadParams::init(backend.representation_dim(), init_seed);
        Self {
            backend,
            head,
            setting,
            eta,
            casting,
        }
    }

    /// Head scores of pre-cast inputs, checking they match the setting.
    pub fn scores(&self, inputs: &[HeadInput]) -> Result<Vec<f64>> {
        inputs
            .iter()
            .map(|x| {
                self.setting.check_input(x)?;
                self.head.score(&self.backend.pooled(&x.words()))
            })
            .collect()
    }

    /// Cast words, pooled representations and head scores per hypothesis.
    #[allow(clippy::type_complexity)]
    fn example_scores(&self, example: &Example) -> Result<(Vec<Words>, Vec<Vec<f64>>, Vec<f64>)> {
        let inputs = self.setting.cast(example, &self.casting)?;
        let words: Vec<Words> = inputs.iter().map(HeadInput::words).collect();
        let pooled: Vec<Vec<f64>> = words.iter().map(|w| self.backend.pooled(w)).collect();
        let scores = pooled
            .iter()
            .map(|p| self.head.score(p))
            .collect::<Result<Vec<_>>>()?;
        Ok((words, pooled, scores))
    }
}

impl<B: DifferentiableLm> Learner for HeadLearner<B> {
    fn parameters(&self) -> Vec<f64> {
        let mut p = self.backend.parameters().to_vec();
        p.extend_from_slice(&self.head.projection);
        p.push(self.head.bias);
        p
    }

    fn set_parameters(&mut self, params: &[f64]) {
        let n = self.backend.parameters().len();
        let d = self.head.projection.len();
        self.backend.parameters_mut().copy_from_slice(&params[..n]);
        self.head.projection.copy_from_slice(&params[n..n + d]);
        self.head.bias = params[n + d];
    }

    fn num_parameters(&self) -> usize {
        self.backend.parameters().len() + self.head.projection.len() + 1
    }

    fn accumulate(&self, example: &Example, grad: &mut [f64]) -> Result<f64> {
        let gold = example
            .gold_index
            .ok_or_else(|| Error::argument(format!("example {} has no gold label", example.id)))?;
        let (words, pooled, scores) = self.example_scores(example)?;
        let (loss, d_scores) = match self.setting {
            HeadSetting::HeadCe => (head_ce_loss(&scores, gold)?, head_ce_grad(&scores, gold)?),
            HeadSetting::HeadMargin => (
                margin_loss(&scores, gold, self.eta)?,
                margin_loss_grad(&scores, gold, self.eta)?,
            ),
        };
        let n = self.backend.parameters().len();
        let d = self.head.projection.len();
        for ((w, p), &ds) in words.iter().zip(&pooled).zip(&d_scores) {
            if ds == 0.0 {
                continue;
            }
            for i in 0..d {
                grad[n + i] += ds * p[i];
            }
            grad[n + d] += ds;
            let upstream: Vec<f64> = self.head.projection.iter().map(|v| ds * v).collect();
            self.backend
                .accumulate_pooled_gradient(w, &upstream, &mut grad[..n]);
        }
        Ok(loss)
    }

    fn predict(&self, example: &Example) -> Result<usize> {
        let (_, _, scores) = self.example_scores(example)?;
        Ok(rank_order(&scores)[0])
    }

    fn apply_update(&mut self, grad: &[f64], lr: f64, weight_decay: f64) {
        let n = self.backend.parameters().len();
        let d = self.head.projection.len();
        sgd_step(self.backend.parameters_mut(), &grad[..n], lr, weight_decay);
        sgd_step(&mut self.head.projection, &grad[n..n + d], lr, weight_decay);
        let mut bias = [self.head.bias];
        sgd_step(&mut bias, &grad[n + d..], lr, weight_decay);
        self.head.bias = bias[0];
    }
}

/// Train a fresh head (seeded by `config.seed`) together with the backend.
pub fn train_head<B: DifferentiableLm>(
    setting: HeadSetting,
    train: &ExampleSet,
    val: &ExampleSet,
    backend: B,
    eta: f64,
    config: &TrainConfig,
    casting: &CastConfig,
) -> Result<(HeadLearner<B>, TrainOutcome)> {
    let mut learner = HeadLearner::new(backend, setting, config.seed, eta, casting.clone());
    let outcome = fit(&mut learner, train, val, config)?;
    Ok((learner, outcome))
}

/// Train/val/test sets for a comparison run.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: ExampleSet,
    pub val: ExampleSet,
    pub test: ExampleSet,
}

/// One seed of one setting: train from a copy of `base`, report best
/// validation and test accuracy of the kept checkpoint.
pub fn run_seed(
    setting: Setting,
    seed: u64,
    splits: &Splits,
    base: &TinyBackend,
    loss: &MarginLossConfig,
    template: &TrainConfig,
    casting: &CastConfig,
) -> Result<SeedResult> {
    let config = TrainConfig {
        seed,
        ..template.clone()
    };
    let (outcome, test_accuracy) = match setting {
        Setting::Ours => {
            let mut learner = SsmLearner::new(base.clone(), *loss, casting.clone());
            let outcome = fit(&mut learner, &splits.train, &splits.val, &config)?;
            (outcome, accuracy(&learner, &splits.test)?)
        }
        head => {
            let (learner, outcome) = train_head(
                HeadSetting::from_setting(head)?,
                &splits.train,
                &splits.val,
                base.clone(),
                loss.eta,
                &config,
                casting,
            )?;
            (outcome, accuracy(&learner, &splits.test)?)
        }
    };
    Ok(SeedResult {
        seed,
        best_val_accuracy: outcome.best_val_accuracy,
        test_accuracy,
    })
}

/// Paired reports for all three settings over the same seeds and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: Vec<RunReport>,
}

pub fn compare_settings(
    seeds: &[u64],
    settings: &[Setting],
    splits: &Splits,
    base: &TinyBackend,
    loss: &MarginLossConfig,
    template: &TrainConfig,
    casting: &CastConfig,
) -> Comparison {
    Comparison {
        reports: settings
            .iter()
            .map(|&setting| {
                stability_study(seeds, setting, template.train_fraction, |seed| {
                    run_seed(setting, seed, splits, base, loss, template, casting)
                })
            })
            .collect(),
    }
}
