//! Sequence scoring: masked-window plans, target premise / hypothesis scores,
//! cumulative n-gram scores and ranking.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{fill_chunked, MaskQuery, MaskResponse, MaskedLm};
use crate::casting::{CastConfig, FullTextInput};
use crate::datasets::Example;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Premise,
    Hypothesis,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Premise => "premise",
            Target::Hypothesis => "hypothesis",
        }
    }

    fn span(self, input: &FullTextInput) -> Range<usize> {
        match self {
            Target::Premise => input.premise_span.clone(),
            Target::Hypothesis => input.hypothesis_span.clone(),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "premise" => Ok(Target::Premise),
            "hypothesis" => Ok(Target::Hypothesis),
            other => Err(Error::argument(format!("unknown target {other:?}"))),
        }
    }
}

/// All windows of `gram` consecutive words inside the targeted span.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    pub base: FullTextInput,
    pub target: Target,
    pub gram: usize,
    pub queries: Vec<MaskQuery>,
}

pub fn build_mask_plan(input: &FullTextInput, target: Target, gram: usize) -> Result<MaskPlan> {
    let span = target.span(input);
    check_gram(span.len(), gram, target)?;
    let queries = (span.start..=span.end - gram)
        .map(|k| MaskQuery::new(input.words.clone(), k..k + gram).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;
    Ok(MaskPlan {
        base: input.clone(),
        target,
        gram,
        queries,
    })
}

fn check_gram(span_len: usize, gram: usize, target: Target) -> Result<()> {
    if gram == 0 || gram > span_len {
        return Err(Error::argument(format!(
            "gram size {gram} out of range for a {target} span of {span_len} words"
        )));
    }
    Ok(())
}

/// Per-hypothesis scores for one target mode and gram range `1..=max_gram`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub hypothesis_index: usize,
    pub per_gram: BTreeMap<usize, f64>,
    pub combined: f64,
    pub mode: Target,
    pub max_gram: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub input: usize,
    pub gram: usize,
    /// d(score)/d(window log-prob): 1 for the premise target, the inverse
    /// window count for the hypothesis target.
    pub weight: f64,
}

/// Every masked query needed to score a list of inputs for grams `1..=max_gram`,
/// flattened into one batchable list.
#[derive(Debug, Clone)]
pub struct ScoringPlan {
    pub queries: Vec<MaskQuery>,
    pub entries: Vec<PlanEntry>,
    pub target: Target,
    pub max_gram: usize,
    inputs: usize,
}

impl ScoringPlan {
    pub fn build(inputs: &[FullTextInput], target: Target, max_gram: usize) -> Result<Self> {
        let mut queries = Vec::new();
        let mut entries = Vec::new();
        for (i, input) in inputs.iter().enumerate() {
            check_gram(target.span(input).len(), max_gram, target)?;
            for g in 1..=max_gram {
                let plan = build_mask_plan(input, target, g)?;
                let weight = match target {
                    Target::Premise => 1.0,
                    Target::Hypothesis => 1.0 / plan.queries.len() as f64,
                };
                entries.extend(std::iter::repeat_n(
                    PlanEntry {
                        input: i,
                        gram: g,
                        weight,
                    },
                    plan.queries.len(),
                ));
                queries.extend(plan.queries);
            }
        }
        Ok(Self {
            queries,
            entries,
            target,
            max_gram,
            inputs: inputs.len(),
        })
    }

    pub fn reduce(&self, responses: &[MaskResponse]) -> Vec<ScoreBreakdown> {
        assert_eq!(responses.len(), self.queries.len());
        let mut sums = vec![BTreeMap::<usize, (f64, usize)>::new(); self.inputs];
        for (e, r) in self.entries.iter().zip(responses) {
            let slot = sums[e.input].entry(e.gram).or_insert((0.0, 0));
            slot.0 += r.total();
            slot.1 += 1;
        }
        sums.into_iter()
            .enumerate()
            .map(|(i, grams)| {
                let per_gram: BTreeMap<usize, f64> = grams
                    .into_iter()
                    .map(|(g, (sum, windows))| match self.target {
                        Target::Premise => (g, sum),
                        Target::Hypothesis => (g, sum / windows as f64),
                    })
                    .collect();
                ScoreBreakdown {
                    hypothesis_index: i,
                    combined: per_gram.values().sum(),
                    per_gram,
                    mode: self.target,
                    max_gram: self.max_gram,
                }
            })
            .collect()
    }

    pub fn run(&self, backend: &dyn MaskedLm) -> Result<Vec<ScoreBreakdown>> {
        let responses = fill_chunked(backend, &self.queries)?;
        Ok(self.reduce(&responses))
    }
}

/// Score each input for grams `1..=max_gram` in one batched pass.
pub fn score_inputs(
    inputs: &[FullTextInput],
    target: Target,
    max_gram: usize,
    backend: &dyn MaskedLm,
) -> Result<Vec<ScoreBreakdown>> {
    ScoringPlan::build(inputs, target, max_gram)?.run(backend)
}

/// Partial g-gram score. Premise target: the sum of window log-probs.
/// Hypothesis target: their mean over the `L - g + 1` windows.
pub fn partial_gram_score(
    input: &FullTextInput,
    target: Target,
    gram: usize,
    backend: &dyn MaskedLm,
) -> Result<f64> {
    let plan = build_mask_plan(input, target, gram)?;
    let responses = fill_chunked(backend, &plan.queries)?;
    let sum: f64 = responses.iter().map(MaskResponse::total).sum();
    Ok(match target {
        Target::Premise => sum,
        Target::Hypothesis => sum / plan.queries.len() as f64,
    })
}

/// Sum of premise word log-probs, each word masked in turn.
pub fn target_premise_score(input: &FullTextInput, backend: &dyn MaskedLm) -> Result<f64> {
    partial_gram_score(input, Target::Premise, 1, backend)
}

/// Mean of hypothesis word log-probs, each word masked in turn.
pub fn target_hypothesis_score(input: &FullTextInput, backend: &dyn MaskedLm) -> Result<f64> {
    partial_gram_score(input, Target::Hypothesis, 1, backend)
}

pub fn cumulative_ngram_score(
    input: &FullTextInput,
    target: Target,
    n: usize,
    backend: &dyn MaskedLm,
) -> Result<ScoreBreakdown> {
    Ok(score_inputs(std::slice::from_ref(input), target, n, backend)?
        .pop()
        .expect("one input, one breakdown"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankerConfig {
    pub target: Target,
    pub grams: usize,
    /// Exchange so/because in COPA inputs before scoring.
    #[serde(default)]
    pub swap_conjunction: bool,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            target: Target::Premise,
            grams: 1,
            swap_conjunction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Hypothesis indices, best first.
    pub order: Vec<usize>,
    pub breakdowns: Vec<ScoreBreakdown>,
}

impl Ranking {
    pub fn from_breakdowns(breakdowns: Vec<ScoreBreakdown>) -> Self {
        let scores: Vec<f64> = breakdowns.iter().map(|b| b.combined).collect();
        Ranking {
            order: rank_order(&scores),
            breakdowns,
        }
    }

    pub fn winner(&self) -> usize {
        self.order[0]
    }

    pub fn scores(&self) -> Vec<f64> {
        self.breakdowns.iter().map(|b| b.combined).collect()
    }
}

/// Indices by descending score; ties go to the lower index.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn full_text_inputs(
    example: &Example,
    casting: &CastConfig,
    swap_conjunction: bool,
) -> Result<Vec<FullTextInput>> {
    (0..example.num_hypotheses())
        .map(|i| {
            let input = casting.to_full_text(example, i)?;
            if swap_conjunction {
                input.swap_copa_conjunction()
            } else {
                Ok(input)
            }
        })
        .collect()
}

/// Rank the hypotheses of `example` by their cumulative n-gram score.
pub fn rank(
    example: &Example,
    config: &RankerConfig,
    casting: &CastConfig,
    backend: &dyn MaskedLm,
) -> Result<Ranking> {
    let scored = full_text_inputs(example, casting, config.swap_conjunction)
        .and_then(|inputs| score_inputs(&inputs, config.target, config.grams, backend));
    scored
        .map(Ranking::from_breakdowns)
        .map_err(|e| e.in_example(&example.id))
}

pub fn hypothesis_only_inputs(example: &Example, casting: &CastConfig) -> Result<Vec<FullTextInput>> {
    (0..example.num_hypotheses())
        .map(|i| casting.to_hypothesis_only(example, i))
        .collect()
}

/// Rank hypotheses with the premise removed, using hypothesis-target scores.
pub fn probe_score(
    example: &Example,
    backend: &dyn MaskedLm,
    n: usize,
    casting: &CastConfig,
) -> Result<Ranking> {
    hypothesis_only_inputs(example, casting)
        .and_then(|inputs| score_inputs(&inputs, Target::Hypothesis, n, backend))
        .map(Ranking::from_breakdowns)
        .map_err(|e| e.in_example(&example.id))
}
