//! Casting premise/hypothesis pairs into model inputs.
//!
//! The full-text format joins `(left, premise, middle, hypothesis, right)`
//! into a single word sequence; the separated-sentence format keeps two
//! segments for classifier baselines. Conjunctions and surface rules are data
//! ([`CastConfig`]), loaded from TOML.

use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::datasets::{Example, Relation, Task, Words};
use crate::error::{Error, Result};

const BUILTIN_RULES: &str = include_str!("casting.default.toml");

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConjunctionSpec {
    pub left: Words,
    pub middle: Words,
    pub right: Words,
}

impl ConjunctionSpec {
    pub fn is_empty(&self) -> bool {
        self.left.is_empty() && self.middle.is_empty() && self.right.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceAdjustment {
    None,
    /// Drop the premise's final period and lowercase the hypothesis's first
    /// letter (the pronoun "I" is left alone).
    JoinClauses,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparatedOrder {
    PremiseFirst,
    HypothesisFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CastRule {
    pub task: Task,
    pub relation: Relation,
    #[serde(flatten)]
    pub conjunctions: ConjunctionSpec,
    pub adjustment: SurfaceAdjustment,
    pub separated_order: SeparatedOrder,
    pub separated_conjunctions: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CastConfig {
    #[serde(rename = "rule")]
    pub rules: Vec<CastRule>,
}

impl CastConfig {
    /// The shipped rules for the four benchmarks plus synthetic data.
    pub fn builtin() -> &'static CastConfig {
        static BUILTIN: OnceLock<CastConfig> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            CastConfig::from_toml_str(BUILTIN_RULES).expect("builtin casting rules parse")
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: CastConfig =
            toml::from_str(text).map_err(|e| Error::schema(format!("casting config: {e}")))?;
        for rule in &cfg.rules {
            if rule.task == Task::Copa && rule.relation == Relation::None {
                return Err(Error::schema("casting config: COPA rule without relation"));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn rule(&self, task: Task, relation: Relation) -> Result<&CastRule> {
        self.rules
            .iter()
            .find(|r| r.task == task && r.relation == relation)
            .ok_or_else(|| {
                Error::argument(format!(
                    "no casting rule for task {task} with relation {}",
                    relation.as_str()
                ))
            })
    }

    pub fn conjunction_for(&self, task: Task, relation: Relation) -> Result<ConjunctionSpec> {
        Ok(self.rule(task, relation)?.conjunctions.clone())
    }

    pub fn to_full_text(&self, example: &Example, hypothesis_index: usize) -> Result<FullTextInput> {
        let hypothesis = hypothesis(example, hypothesis_index)?;
        let rule = self.rule(example.task, example.relation)?;
        let (premise, hypothesis) = match rule.adjustment {
            SurfaceAdjustment::None => (example.premise.clone(), hypothesis.clone()),
            SurfaceAdjustment::JoinClauses => join_clauses(&example.premise, hypothesis),
        };
        let c = &rule.conjunctions;
        let mut words = Vec::with_capacity(
            c.left.len() + premise.len() + c.middle.len() + hypothesis.len() + c.right.len(),
        );
        words.extend(c.left.iter().cloned());
        let p_start = words.len();
        words.extend(premise);
        let premise_span = p_start..words.len();
        words.extend(c.middle.iter().cloned());
        let h_start = words.len();
        words.extend(hypothesis);
        let hypothesis_span = h_start..words.len();
        words.extend(c.right.iter().cloned());
        Ok(FullTextInput {
            words,
            premise_span,
            hypothesis_span,
        })
    }

    pub fn to_separated_sentence(
        &self,
        example: &Example,
        hypothesis_index: usize,
    ) -> Result<PairInput> {
        let hypothesis = hypothesis(example, hypothesis_index)?;
        let rule = self.rule(example.task, example.relation)?;
        let c = &rule.conjunctions;
        let (first, second) = match rule.separated_order {
            SeparatedOrder::PremiseFirst => (&example.premise, hypothesis),
            SeparatedOrder::HypothesisFirst => (hypothesis, &example.premise),
        };
        let (first, second) = if rule.separated_conjunctions {
            (
                c.left.iter().chain(first).cloned().collect(),
                c.middle.iter().chain(second).chain(&c.right).cloned().collect(),
            )
        } else {
            (first.clone(), second.clone())
        };
        Ok(PairInput { first, second })
    }

    /// Hypothesis-only input for probing: no premise and no connecting
    /// conjunction, but task answer prefixes (those kept in the separated
    /// format) stay attached to the hypothesis. The premise span is empty.
    pub fn to_hypothesis_only(
        &self,
        example: &Example,
        hypothesis_index: usize,
    ) -> Result<FullTextInput> {
        let hypothesis = hypothesis(example, hypothesis_index)?;
        let rule = self.rule(example.task, example.relation)?;
        let c = &rule.conjunctions;
        let mut words = Vec::new();
        if rule.separated_conjunctions {
            words.extend(c.middle.iter().cloned());
        }
        let h_start = words.len();
        words.extend(hypothesis.iter().cloned());
        let hypothesis_span = h_start..words.len();
        if rule.separated_conjunctions {
            words.extend(c.right.iter().cloned());
        }
        Ok(FullTextInput {
            words,
            premise_span: 0..0,
            hypothesis_span,
        })
    }
}

fn hypothesis(example: &Example, index: usize) -> Result<&Words> {
    example.hypotheses.get(index).ok_or_else(|| {
        Error::argument(format!(
            "hypothesis index {index} out of range for example {} with {} hypotheses",
            example.id,
            example.hypotheses.len()
        ))
    })
}

fn join_clauses(premise: &[String], hypothesis: &[String]) -> (Words, Words) {
    let mut premise = premise.to_vec();
    if let Some(last) = premise.last_mut() {
        if last.len() > 1 && last.ends_with('.') {
            last.pop();
        }
    }
    let mut hypothesis = hypothesis.to_vec();
    if let Some(first) = hypothesis.first_mut() {
        let is_pronoun_i = first == "I" || first.starts_with("I'");
        if !is_pronoun_i {
            let mut chars = first.chars();
            if let Some(c) = chars.next() {
                *first = c.to_lowercase().chain(chars).collect();
            }
        }
    }
    (premise, hypothesis)
}

/// Conjunctions for `task`/`relation` under the builtin rules.
pub fn conjunction_for(task: Task, relation: Relation) -> Result<ConjunctionSpec> {
    CastConfig::builtin().conjunction_for(task, relation)
}

pub fn to_full_text(example: &Example, hypothesis_index: usize) -> Result<FullTextInput> {
    CastConfig::builtin().to_full_text(example, hypothesis_index)
}

pub fn to_separated_sentence(example: &Example, hypothesis_index: usize) -> Result<PairInput> {
    CastConfig::builtin().to_separated_sentence(example, hypothesis_index)
}

/// One full-text sequence with the word ranges of premise and hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FullTextInput {
    pub words: Words,
    pub premise_span: Range<usize>,
    pub hypothesis_span: Range<usize>,
}

impl FullTextInput {
    pub fn premise(&self) -> &[String] {
        &self.words[self.premise_span.clone()]
    }

    pub fn hypothesis(&self) -> &[String] {
        &self.words[self.hypothesis_span.clone()]
    }

    /// Words between the premise and the hypothesis.
    pub fn middle(&self) -> &[String] {
        &self.words[self.premise_span.end..self.hypothesis_span.start]
    }

    pub fn text(&self) -> String {
        self.words.join(" ")
    }

    /// `[CLS] ... [SEP]` rendering.
    pub fn render(&self) -> String {
        format!("{CLS} {} {SEP}", self.text())
    }

    /// Exchange the `so`/`because` middle conjunction of a COPA input.
    pub fn swap_copa_conjunction(&self) -> Result<FullTextInput> {
        let at = self.premise_span.end;
        let replacement = match self.middle() {
            [w] if w == "so" => "because",
            [w] if w == "because" => "so",
            other => {
                return Err(Error::argument(format!(
                    "no so/because middle conjunction to swap (found {other:?})"
                )))
            }
        };
        let mut swapped = self.clone();
        swapped.words[at] = replacement.to_string();
        Ok(swapped)
    }
}

pub fn swap_copa_conjunction(input: &FullTextInput) -> Result<FullTextInput> {
    input.swap_copa_conjunction()
}

/// Two-segment input for classifier baselines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairInput {
    pub first: Words,
    pub second: Words,
}

impl PairInput {
    /// `[CLS] first [SEP] second [SEP]` rendering.
    pub fn render(&self) -> String {
        format!(
            "{CLS} {} {SEP} {} {SEP}",
            self.first.join(" "),
            self.second.join(" ")
        )
    }

    /// Both segments joined by a separator word.
    pub fn joined_words(&self) -> Words {
        self.first
            .iter()
            .cloned()
            .chain(std::iter::once(SEP.to_string()))
            .chain(self.second.iter().cloned())
            .collect()
    }
}
