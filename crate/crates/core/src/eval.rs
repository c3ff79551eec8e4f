//! Accuracy evaluation, zero-shot sweeps and hypothesis-only probing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::MaskedLm;
use crate::casting::CastConfig;
use crate::datasets::{Example, ExampleSet, Split};
use crate::error::{Error, Result};
use crate::scoring::{probe_score, rank, RankerConfig, Ranking, ScoreBreakdown, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub dataset: String,
    pub split: Split,
    /// `premise/1`, `hypothesis/4+swap`, `probe/1`, ...
    pub mode: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// Mean of `1/n` over labeled examples, `n` the hypothesis count.
    pub random_baseline: f64,
    #[serde(default)]
    pub skipped_unlabeled: usize,
}

/// Ranking of one example, written next to every aggregate report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub predicted: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_index: Option<usize>,
    pub order: Vec<usize>,
    pub breakdowns: Vec<ScoreBreakdown>,
}

impl PredictionRecord {
    fn new(example: &Example, ranking: Ranking) -> Self {
        Self {
            id: example.id.clone(),
            predicted: ranking.winner(),
            gold_index: example.gold_index,
            order: ranking.order,
            breakdowns: ranking.breakdowns,
        }
    }

    pub fn is_correct(&self) -> Option<bool> {
        self.gold_index.map(|g| g == self.predicted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: AccuracyReport,
    pub records: Vec<PredictionRecord>,
}

pub fn mode_label(config: &RankerConfig) -> String {
    let swap = if config.swap_conjunction { "+swap" } else { "" };
    format!("{}/{}{swap}", config.target, config.grams)
}

/// Rank every example, in parallel when the backend allows it.
fn rank_all<F>(set: &ExampleSet, backend: &dyn MaskedLm, rank_one: F) -> Result<Vec<PredictionRecord>>
where
    F: Fn(&Example) -> Result<Ranking> + Sync,
{
    let one = |ex: &Example| rank_one(ex).map(|r| PredictionRecord::new(ex, r));
    if backend.descriptor().thread_safe {
        // Collect every outcome so the reported error is the earliest example's.
        let all: Vec<Result<PredictionRecord>> = set.examples().par_iter().map(one).collect();
        all.into_iter().collect()
    } else {
        set.iter().map(one).collect()
    }
}

/// Aggregate prediction records into an accuracy report.
pub fn summarize(
    dataset: &str,
    split: Split,
    mode: String,
    set: &ExampleSet,
    records: &[PredictionRecord],
) -> Result<AccuracyReport> {
    let mut correct = 0;
    let mut total = 0;
    let mut baseline = 0.0;
    for (ex, rec) in set.iter().zip(records) {
        if let Some(ok) = rec.is_correct() {
            total += 1;
            correct += usize::from(ok);
            baseline += 1.0 / ex.num_hypotheses() as f64;
        }
    }
    if total == 0 {
        return Err(Error::Report(format!(
            "{dataset}: no labeled examples to evaluate"
        )));
    }
    Ok(AccuracyReport {
        dataset: dataset.to_string(),
        split,
        mode,
        correct,
        total,
        accuracy: correct as f64 / total as f64,
        random_baseline: baseline / total as f64,
        skipped_unlabeled: records.len() - total,
    })
}

/// Top-1 accuracy of the ranker on the labeled examples of `set`.
pub fn evaluate(
    set: &ExampleSet,
    dataset: &str,
    config: &RankerConfig,
    casting: &CastConfig,
    backend: &dyn MaskedLm,
) -> Result<Evaluation> {
    let records = rank_all(set, backend, |ex| rank(ex, config, casting, backend))?;
    let report = summarize(dataset, set.split(), mode_label(config), set, &records)?;
    Ok(Evaluation { report, records })
}

/// One accuracy row per (target, n), targets outermost.
pub fn zeroshot_sweep(
    set: &ExampleSet,
    dataset: &str,
    targets: &[Target],
    grams: &[usize],
    casting: &CastConfig,
    backend: &dyn MaskedLm,
) -> Result<Vec<Evaluation>> {
    if targets.is_empty() || grams.is_empty() {
        return Err(Error::argument("zero-shot sweep needs at least one target and gram size"));
    }
    let mut rows = Vec::with_capacity(targets.len() * grams.len());
    for &target in targets {
        for &n in grams {
            let config = RankerConfig {
                target,
                grams: n,
                swap_conjunction: false,
            };
            rows.push(evaluate(set, dataset, &config, casting, backend)?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub hyp_only: AccuracyReport,
    pub random: f64,
    /// hyp-only accuracy over the random baseline.
    pub ratio: f64,
}

pub fn probe(
    set: &ExampleSet,
    dataset: &str,
    grams: usize,
    casting: &CastConfig,
    backend: &dyn MaskedLm,
) -> Result<(ProbeReport, Vec<PredictionRecord>)> {
    let records = rank_all(set, backend, |ex| probe_score(ex, backend, grams, casting))?;
    let hyp_only = summarize(dataset, set.split(), format!("probe/{grams}"), set, &records)?;
    let random = hyp_only.random_baseline;
    Ok((
        ProbeReport {
            ratio: hyp_only.accuracy / random,
            random,
            hyp_only,
        },
        records,
    ))
}

/// Hypothesis-only accuracy next to the random baseline.
pub fn probe_report(
    set: &ExampleSet,
    dataset: &str,
    grams: usize,
    casting: &CastConfig,
    backend: &dyn MaskedLm,
) -> Result<ProbeReport> {
    probe(set, dataset, grams, casting, backend).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{CountBackend, CountMode};
    use crate::datasets::{words, Relation, Task};

    fn set() -> ExampleSet {
        let exs = (0..10)
            .map(|i| Example {
                id: format!("e{i}"),
                premise: words("a b"),
                hypotheses: vec![words("a"), words("b"), words("c")],
                gold_index: if i == 9 { None } else { Some(i % 3) },
                task: Task::Synthetic,
                relation: Relation::None,
            })
            .collect();
        ExampleSet::new(exs, Split::Test).unwrap()
    }

    fn backend() -> CountBackend {
        CountBackend::fit(&[words("a a b c")], 0.0, CountMode::Unigram).unwrap()
    }

    #[test]
    fn ties_resolve_to_first_hypothesis() {
        let s = set();
        let ev = evaluate(&s, "syn", &RankerConfig::default(), CastConfig::builtin(), &backend()).unwrap();
        // Premise mode under a unigram model always ties, so index 0 wins.
        let zero_gold = s.iter().filter(|e| e.gold_index == Some(0)).count();
        assert_eq!(ev.report.correct, zero_gold);
        assert_eq!(ev.report.total, 9);
        assert_eq!(ev.report.skipped_unlabeled, 1);
        assert!((ev.report.random_baseline - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ev.records.len(), 10);
        assert_eq!(ev.report.mode, "premise/1");
    }

    #[test]
    fn sweep_rows() {
        let s = set();
        let cast = CastConfig::builtin();
        let rows = zeroshot_sweep(&s, "syn", &[Target::Premise], &[1, 2], cast, &backend()).unwrap();
        let modes: Vec<&str> = rows.iter().map(|r| r.report.mode.as_str()).collect();
        assert_eq!(modes, ["premise/1", "premise/2"]);
        let rows = zeroshot_sweep(
            &s,
            "syn",
            &[Target::Premise, Target::Hypothesis],
            &[1],
            cast,
            &backend(),
        )
        .unwrap();
        assert_eq!(rows[1].report.mode, "hypothesis/1");
        assert!(zeroshot_sweep(&s, "syn", &[Target::Premise], &[], cast, &backend()).is_err());
    }

    #[test]
    fn unlabeled_only_is_an_error() {
        let exs = vec![Example {
            id: "u".into(),
            premise: words("a"),
            hypotheses: vec![words("a"), words("b")],
            gold_index: None,
            task: Task::Synthetic,
            relation: Relation::None,
        }];
        let s = ExampleSet::new(exs, Split::Test).unwrap();
        assert!(matches!(
            evaluate(&s, "x", &RankerConfig::default(), CastConfig::builtin(), &backend()),
            Err(Error::Report(_))
        ));
    }

    #[test]
    fn probe_report_shape() {
        let s = set();
        let r = probe_report(&s, "syn", 1, CastConfig::builtin(), &backend()).unwrap();
        // Hypothesis-only under P(a) > P(b) = P(c): always picks "a" (index 0).
        assert_eq!(r.hyp_only.correct, 3);
        assert!((r.random - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.ratio - r.hyp_only.accuracy * 3.0).abs() < 1e-12);
    }
}
