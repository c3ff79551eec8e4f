//! Seeded synthetic fixtures for desk-scale experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Example, Relation, Task, Words};

/// Topic-association ranking set: the premise and the gold hypothesis are
/// drawn from the same topic vocabulary, distractors from other topics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparableConfig {
    pub topics: usize,
    pub words_per_topic: usize,
    pub premise_len: usize,
    pub hypothesis_len: usize,
    pub choices: usize,
    pub seed: u64,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        Self {
            topics: 4,
            words_per_topic: 6,
            premise_len: 4,
            hypothesis_len: 3,
            choices: 2,
            seed: 0,
        }
    }
}

pub fn topic_word(topic: usize, i: usize) -> String {
    format!("t{topic}w{i}")
}

impl SeparableConfig {
    pub fn vocabulary(&self) -> Vec<String> {
        (0..self.topics)
            .flat_map(|t| (0..self.words_per_topic).map(move |i| topic_word(t, i)))
            .collect()
    }

    /// Topic of a word produced by this generator.
    pub fn topic_of(word: &str) -> Option<usize> {
        word.strip_prefix('t')?.split('w').next()?.parse().ok()
    }

    /// `count` examples with ids `{prefix}-{i}`.
    pub fn generate(&self, prefix: &str, count: usize) -> Vec<Example> {
        assert!(self.topics >= self.choices, "need a distinct topic per choice");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let topics: Vec<usize> = (0..self.topics).collect();
        (0..count)
            .map(|i| {
                let picked: Vec<usize> = topics
                    .choose_multiple(&mut rng, self.choices)
                    .copied()
                    .collect();
                let premise_topic = picked[0];
                let gold = rng.gen_range(0..self.choices);
                let premise = self.draw(&mut rng, premise_topic, self.premise_len);
                // picked[0] goes to the gold slot, the rest fill the others in order.
                let mut others = picked[1..].iter();
                let hypotheses = (0..self.choices)
                    .map(|slot| {
                        let topic = if slot == gold {
                            premise_topic
                        } else {
                            *others.next().unwrap()
                        };
                        self.draw(&mut rng, topic, self.hypothesis_len)
                    })
                    .collect();
                Example {
                    id: format!("{prefix}-{i}"),
                    premise,
                    hypotheses,
                    gold_index: Some(gold),
                    task: Task::Synthetic,
                    relation: Relation::None,
                }
            })
            .collect()
    }

    fn draw(&self, rng: &mut ChaCha8Rng, topic: usize, len: usize) -> Words {
        (0..len)
            .map(|_| topic_word(topic, rng.gen_range(0..self.words_per_topic)))
            .collect()
    }
}

/// A corpus for fitting a count backend plus a probing set whose hypotheses
/// are (biased) or are not (unbiased) separable by word frequency alone.
#[derive(Debug, Clone)]
pub struct ProbeFixture {
    pub corpus: Vec<Words>,
    pub examples: Vec<Example>,
}

pub const PROBE_GROUP_SIZE: usize = 10;

fn common(i: usize) -> String {
    format!("c{i}")
}

fn rare(i: usize) -> String {
    format!("r{i}")
}

/// Build a probing fixture with `count` examples of the given arity.
///
/// The corpus uses "common" words nine times out of ten. In the biased set the
/// gold hypothesis is all common words and distractors all rare words; in the
/// unbiased set every hypothesis word is common or rare with equal odds.
pub fn probe_fixture(count: usize, choices: usize, biased: bool, seed: u64) -> ProbeFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mixed = |rng: &mut ChaCha8Rng, p_common: f64| {
        let i = rng.gen_range(0..PROBE_GROUP_SIZE);
        if rng.gen_bool(p_common) {
            common(i)
        } else {
            rare(i)
        }
    };
    let corpus = (0..300)
        .map(|_| (0..6).map(|_| mixed(&mut rng, 0.9)).collect())
        .collect();
    let examples = (0..count)
        .map(|i| {
            let gold = rng.gen_range(0..choices);
            let premise = (0..5).map(|_| mixed(&mut rng, 0.5)).collect();
            let hypotheses = (0..choices)
                .map(|slot| {
                    (0..3)
                        .map(|_| match (biased, slot == gold) {
                            (true, true) => common(rng.gen_range(0..PROBE_GROUP_SIZE)),
                            (true, false) => rare(rng.gen_range(0..PROBE_GROUP_SIZE)),
                            (false, _) => mixed(&mut rng, 0.5),
                        })
                        .collect()
                })
                .collect();
            Example {
                id: format!("probe-{i}"),
                premise,
                hypotheses,
                gold_index: Some(gold),
                task: Task::Synthetic,
                relation: Relation::None,
            }
        })
        .collect();
    ProbeFixture { corpus, examples }
}
