use ssm_core::backend::{DifferentiableLm, MaskedLm, TinyBackend, Vocab};
use ssm_core::baselines::{train_head, HeadSetting};
use ssm_core::casting::CastConfig;
use ssm_core::datasets::synthetic::probe_fixture;
use ssm_core::datasets::synthetic::SeparableConfig;
use ssm_core::datasets::{ExampleSet, Split};
use ssm_core::training::{
    accuracy, lr_at, stability_study, train_ssm, warmup_steps, MarginLossConfig, SeedResult,
    Setting, TrainConfig,
};
use ssm_core::Error;

fn separable(seed: u64, prefix: &str, count: usize, split: Split) -> ExampleSet {
    let cfg = SeparableConfig { seed, ..SeparableConfig::default() };
    ExampleSet::new(cfg.generate(prefix, count), split).unwrap()
}

#[test]
fn schedule_shape() {
    assert_eq!(warmup_steps(100, 0.06), 6);
    assert_eq!(warmup_steps(50, 0.06), 3);
    assert_eq!(lr_at(0, 100, 1.0, 0.06).unwrap(), 0.0);
    assert_eq!(lr_at(3, 100, 1.0, 0.06).unwrap(), 0.5);
    assert_eq!(lr_at(6, 100, 1.0, 0.06).unwrap(), 1.0);
    assert!(lr_at(99, 100, 1.0, 0.06).unwrap() < 0.02);
    let lrs: Vec<f64> = (6..100).map(|s| lr_at(s, 100, 1.0, 0.06).unwrap()).collect();
    assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn checkpoint_round_trip_preserves_scores() {
    let train = separable(1, "tr", 40, Split::Train);
    let val = separable(2, "va", 20, Split::Val);
    let vocab = Vocab::new(SeparableConfig::default().vocabulary());
    let config = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let (trained, _) = train_ssm(
        &train,
        &val,
        TinyBackend::init(vocab, 6, 1).unwrap(),
        &MarginLossConfig::default(),
        &config,
        CastConfig::builtin(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    trained.save(&path).unwrap();
    let loaded = TinyBackend::load(&path).unwrap();
    assert_eq!(loaded.parameters(), trained.parameters());
    assert_eq!(loaded.vocab(), trained.vocab());
    let q = ssm_core::backend::MaskQuery::new(val.examples()[0].premise.clone(), 0..2).unwrap();
    assert_eq!(
        loaded.fill_log_probs(std::slice::from_ref(&q)).unwrap(),
        trained.fill_log_probs(&[q]).unwrap()
    );

    std::fs::write(&path, "not a checkpoint\n{}").unwrap();
    assert!(TinyBackend::load(&path).is_err());
}

#[test]
fn head_baselines_learn_hypothesis_only_signal() {
    // Gold hypotheses use frequent words, distractors rare ones: a pooled
    // linear head can pick that up without seeing the premise.
    let fixture = |seed, prefix: &str| {
        let f = probe_fixture(120, 2, true, seed);
        let exs = f
            .examples
            .into_iter()
            .enumerate()
            .map(|(i, mut e)| {
                e.id = format!("{prefix}{i}");
                e
            })
            .collect();
        exs
    };
    let train = ExampleSet::new(fixture(1, "tr"), Split::Train).unwrap();
    let val = ExampleSet::new(fixture(2, "va"), Split::Val).unwrap();
    let vocab = Vocab::new((0..10).flat_map(|i| [format!("c{i}"), format!("r{i}")]));
    let config = TrainConfig { epochs: 10, ..TrainConfig::default() };
    for setting in [HeadSetting::HeadCe, HeadSetting::HeadMargin] {
        let (learner, outcome) = train_head(
            setting,
            &train,
            &val,
            TinyBackend::init(vocab.clone(), 6, 3).unwrap(),
            0.5,
            &config,
            CastConfig::builtin(),
        )
        .unwrap();
        assert!(outcome.best_val_accuracy > 0.9, "{setting:?}: {}", outcome.best_val_accuracy);
        assert!(accuracy(&learner, &val).unwrap() == outcome.best_val_accuracy);
    }
}

#[test]
fn train_fraction_reduces_steps() {
    let train = separable(1, "tr", 100, Split::Train);
    let val = separable(2, "va", 20, Split::Val);
    let vocab = Vocab::new(SeparableConfig::default().vocabulary());
    let config = TrainConfig { epochs: 2, batch_size: 8, train_fraction: 0.25, ..TrainConfig::default() };
    let (_, outcome) = train_ssm(
        &train,
        &val,
        TinyBackend::init(vocab, 4, 1).unwrap(),
        &MarginLossConfig::default(),
        &config,
        CastConfig::builtin(),
    )
    .unwrap();
    assert_eq!(outcome.total_steps, 2 * 25usize.div_ceil(8));
}

#[test]
fn stability_keeps_seed_order_and_lists_failures() {
    let seeds = [5, 1, 9, 3];
    let report = stability_study(&seeds, Setting::Ours, 1.0, |seed| {
        if seed == 9 {
            Err(Error::Diverged { step: 4, loss: f64::NAN })
        } else {
            Ok(SeedResult { seed, best_val_accuracy: 0.5, test_accuracy: seed as f64 / 10.0 })
        }
    });
    let got: Vec<u64> = report.per_seed.iter().map(|s| s.seed).collect();
    assert_eq!(got, [5, 1, 3]);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].seed, 9);
    assert_eq!(report.max, 0.5);
    assert!((report.mean - 0.3).abs() < 1e-15);
}
