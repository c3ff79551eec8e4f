//! Benchmark ingestion into one canonical example schema.
//!
//! Every loader normalizes into [`Example`]; the canonical on-disk form is
//! one JSON object per line with exactly the fields of [`Example`].

mod loaders;
pub mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub use loaders::{
    load_canonical, load_commonsenseqa, load_copa, load_dataset, load_hellaswag, load_swag,
    parse_canonical, DatasetFormat, CSQA_TEST_STAR_LEN,
};

pub type Words = Vec<String>;

/// Split text into words: NFC normalization, then whitespace splitting.
/// Punctuation stays attached to its word.
pub fn words(text: &str) -> Words {
    let normalized: String = text.nfc().collect();
    normalized.split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Copa,
    #[serde(rename = "commonsenseqa")]
    CommonsenseQa,
    Swag,
    #[serde(rename = "hellaswag")]
    HellaSwag,
    Synthetic,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Copa => "copa",
            Task::CommonsenseQa => "commonsenseqa",
            Task::Swag => "swag",
            Task::HellaSwag => "hellaswag",
            Task::Synthetic => "synthetic",
        }
    }

    /// Hypothesis count fixed by the task, if any.
    pub fn arity(self) -> Option<usize> {
        match self {
            Task::Copa => Some(2),
            Task::CommonsenseQa => Some(5),
            Task::Swag | Task::HellaSwag => Some(4),
            Task::Synthetic => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "copa" => Ok(Task::Copa),
            "commonsenseqa" | "csqa" => Ok(Task::CommonsenseQa),
            "swag" => Ok(Task::Swag),
            "hellaswag" => Ok(Task::HellaSwag),
            "synthetic" => Ok(Task::Synthetic),
            other => Err(Error::schema(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Cause,
    Effect,
    None,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Cause => "cause",
            Relation::Effect => "effect",
            Relation::None => "none",
        }
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cause" => Ok(Relation::Cause),
            "effect" => Ok(Relation::Effect),
            "none" => Ok(Relation::None),
            other => Err(Error::schema(format!("unknown relation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    /// Held-out second half of the CommonsenseQA validation file.
    TestStar,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" | "dev" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "test_star" | "test*" => Ok(Split::TestStar),
            other => Err(Error::argument(format!("unknown split {other:?}"))),
        }
    }
}

/// One ranking instance: a premise and the candidate hypotheses to rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub premise: Words,
    pub hypotheses: Vec<Words>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_index: Option<usize>,
    pub task: Task,
    pub relation: Relation,
}

impl Example {
    pub fn validate(&self) -> Result<()> {
        let n = self.hypotheses.len();
        if n < 2 {
            return Err(Error::schema(format!(
                "example {}: {n} hypotheses, need at least 2",
                self.id
            )));
        }
        if let Some(arity) = self.task.arity() {
            if n != arity {
                return Err(Error::schema(format!(
                    "example {}: {} requires {arity} hypotheses, found {n}",
                    self.id, self.task
                )));
            }
        }
        if let Some(gold) = self.gold_index {
            if gold >= n {
                return Err(Error::schema(format!(
                    "example {}: gold index {gold} out of range for {n} hypotheses",
                    self.id
                )));
            }
        }
        match (self.task, self.relation) {
            (Task::Copa, Relation::None) => {
                return Err(Error::schema(format!(
                    "example {}: COPA requires a cause/effect relation",
                    self.id
                )))
            }
            (Task::Copa, _) | (_, Relation::None) => {}
            (task, rel) => {
                return Err(Error::schema(format!(
                    "example {}: relation {} not allowed for {task}",
                    self.id,
                    rel.as_str()
                )))
            }
        }
        if self.premise.is_empty() {
            return Err(Error::schema(format!("example {}: empty premise", self.id)));
        }
        if let Some(i) = self.hypotheses.iter().position(Vec::is_empty) {
            return Err(Error::schema(format!(
                "example {}: hypothesis {i} is empty",
                self.id
            )));
        }
        Ok(())
    }

    pub fn num_hypotheses(&self) -> usize {
        self.hypotheses.len()
    }
}

/// An ordered, validated collection of examples from one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSet {
    examples: Vec<Example>,
    split: Split,
}

impl ExampleSet {
    /// Validates every example and id uniqueness.
    pub fn new(examples: Vec<Example>, split: Split) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        for ex in &examples {
            ex.validate()?;
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::schema(format!("duplicate example id {:?}", ex.id)));
            }
        }
        Ok(Self { examples, split })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    pub fn into_examples(self) -> Vec<Example> {
        self.examples
    }

    /// Canonical line-delimited encoding, one example per line.
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            out.push_str(&serde_json::to_string(ex).expect("example serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_canonical(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_canonical()).map_err(|e| Error::io(path, e))
    }

    /// Seeded subsample of `ceil(fraction * len)` examples, kept in source order.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<ExampleSet> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::argument(format!(
                "fraction {fraction} not in (0, 1]"
            )));
        }
        let n = self.examples.len();
        let keep = subsample_size(n, fraction);
        if keep == 0 {
            return Err(Error::argument(format!(
                "subsample of {n} examples at fraction {fraction} is empty"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut picked = order[..keep].to_vec();
        picked.sort_unstable();
        Ok(ExampleSet {
            examples: picked.into_iter().map(|i| self.examples[i].clone()).collect(),
            split: self.split,
        })
    }
}

impl<'a> IntoIterator for &'a ExampleSet {
    type Item = &'a Example;
    type IntoIter = std::slice::Iter<'a, Example>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

/// `ceil(fraction * n)`, with products within 1e-9 of an integer snapped to it
/// so that e.g. `0.1 * 400` is 40 and not 41.
pub fn subsample_size(n: usize, fraction: f64) -> usize {
    let exact = fraction * n as f64;
    let nearest = exact.round();
    let size = if (exact - nearest).abs() < 1e-9 {
        nearest
    } else {
        exact.ceil()
    };
    (size as usize).min(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: &str, n: usize) -> Example {
        Example {
            id: id.to_string(),
            premise: words("a premise"),
            hypotheses: (0..n).map(|i| words(&format!("hyp {i}"))).collect(),
            gold_index: Some(0),
            task: Task::Synthetic,
            relation: Relation::None,
        }
    }

    fn set(n: usize) -> ExampleSet {
        ExampleSet::new((0..n).map(|i| ex(&format!("e{i}"), 2)).collect(), Split::Train).unwrap()
    }

    #[test]
    fn words_normalize_and_keep_punctuation() {
        // "e" + combining acute composes to U+00E9 under NFC.
        assert_eq!(words("Cafe\u{301}  ok.\tdone"), vec!["Caf\u{e9}", "ok.", "done"]);
        assert_eq!(words("neighbor's door."), vec!["neighbor's", "door."]);
    }

    #[test]
    fn validation_rejects_bad_examples() {
        let mut e = ex("x", 2);
        e.gold_index = Some(2);
        assert!(matches!(e.validate(), Err(Error::Schema(_))));

        let mut e = ex("x", 3);
        e.task = Task::Copa;
        e.relation = Relation::Cause;
        assert!(e.validate().is_err());

        let mut e = ex("x", 2);
        e.task = Task::Copa;
        assert!(e.validate().is_err(), "COPA without relation");

        let mut e = ex("x", 2);
        e.hypotheses[1].clear();
        assert!(e.validate().is_err());

        let dup = ExampleSet::new(vec![ex("a", 2), ex("a", 2)], Split::Val);
        assert!(dup.is_err());
    }

    #[test]
    fn subsample_sizes_use_ceiling() {
        // Oracle: integer ceiling division on exact rationals.
        let ceil_div = |num: usize, den: usize| num.div_ceil(den);
        assert_eq!(subsample_size(9741, 0.01), ceil_div(9741, 100));
        assert_eq!(subsample_size(9741, 0.01), 98);
        assert_eq!(subsample_size(400, 0.1), ceil_div(400 * 10, 100));
        assert_eq!(subsample_size(400, 0.1), 40);
        assert_eq!(subsample_size(400, 1.0), 400);
        assert_eq!(subsample_size(3, 0.5), 2);
    }

    #[test]
    fn subsample_identity_and_determinism() {
        let s = set(400);
        assert_eq!(s.subsample(1.0, 99).unwrap(), s);
        let a = s.subsample(0.1, 7).unwrap();
        let b = s.subsample(0.1, 7).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!(a, b);
        let c = s.subsample(0.1, 8).unwrap();
        assert_ne!(a, c);
        // Source order is preserved.
        let pos: Vec<usize> = a
            .iter()
            .map(|e| e.id[1..].parse::<usize>().unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn subsample_errors() {
        let s = set(10);
        assert!(s.subsample(0.0, 1).is_err());
        assert!(s.subsample(1.5, 1).is_err());
        let empty = ExampleSet::new(vec![], Split::Train).unwrap();
        assert!(empty.subsample(0.5, 1).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let s = set(5);
        let text = s.to_canonical();
        let back = parse_canonical(&text, "mem", Split::Train).unwrap();
        assert_eq!(back, s);
    }
}
