use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;
use ssm_core::backend::DifferentiableLm;
use ssm_core::baselines::{run_seed, Splits};
use ssm_core::casting::CastConfig;
use ssm_core::datasets::synthetic::{probe_fixture, SeparableConfig};
use ssm_core::datasets::{load_dataset, DatasetFormat, ExampleSet, Split};
use ssm_core::eval::{evaluate, probe, zeroshot_sweep};
use ssm_core::report::ReportBundle;
use ssm_core::scoring::{RankerConfig, Target};
use ssm_core::training::{
    stability_study, train_ssm, MarginLossConfig, RunReport, Setting, TrainConfig,
};

use crate::args::{Cli, Command, Data, DatasetKind, Global, SettingArg, SynthKind, TargetArg, TrainArgs};
use crate::{backends, output, usage};

fn target(t: TargetArg) -> Target {
    match t {
        TargetArg::Premise => Target::Premise,
        TargetArg::Hypothesis => Target::Hypothesis,
    }
}

fn setting(s: SettingArg) -> Setting {
    match s {
        SettingArg::Ours => Setting::Ours,
        SettingArg::HeadCe => Setting::HeadCe,
        SettingArg::HeadMargin => Setting::HeadMargin,
    }
}

fn dataset_format(d: DatasetKind) -> DatasetFormat {
    match d {
        DatasetKind::Copa => DatasetFormat::Copa,
        DatasetKind::Csqa => DatasetFormat::Csqa,
        DatasetKind::Swag => DatasetFormat::Swag,
        DatasetKind::Hellaswag => DatasetFormat::HellaSwag,
        DatasetKind::Canonical => DatasetFormat::Canonical,
    }
}

fn dataset_name(g: &Global, path: &Path) -> String {
    match g.dataset {
        DatasetKind::Canonical => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "canonical".into()),
        DatasetKind::Copa => "copa".into(),
        DatasetKind::Csqa => "commonsenseqa".into(),
        DatasetKind::Swag => "swag".into(),
        DatasetKind::Hellaswag => "hellaswag".into(),
    }
}

fn load(g: &Global, path: &Path, split: &str) -> Result<ExampleSet> {
    let split: Split = split.parse().map_err(|e: ssm_core::Error| usage(e.to_string()))?;
    load_dataset(dataset_format(g.dataset), path, split)
        .with_context(|| format!("loading {}", path.display()))
}

fn load_data(g: &Global, data: &Data) -> Result<ExampleSet> {
    load(g, &data.data, &data.split)
}

fn casting(g: &Global) -> Result<CastConfig> {
    Ok(match &g.config {
        Some(path) => CastConfig::load(path)?,
        None => CastConfig::builtin().clone(),
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Cast { data } => cast(g, &data),
        Command::Score { data, scoring } => {
            let set = load_data(g, &data)?;
            let cast = casting(g)?;
            let backend = backends::build(g.backend, &g.backend_opts, g.seed, &[&set])?;
            let config = RankerConfig {
                target: target(scoring.target),
                grams: scoring.grams,
                swap_conjunction: scoring.swap_conjunction,
            };
            let eval = evaluate(&set, &dataset_name(g, &data.data), &config, &cast, backend.as_ref())?;
            output::write_jsonl(&g.out_dir, "score.predictions.jsonl", &eval.records)?;
            let bundle = ReportBundle { accuracy: vec![eval.report], ..Default::default() };
            output::emit(&g.out_dir, "score", &bundle, g.format)?;
            Ok(())
        }
        Command::Probe { data, grams } => {
            let set = load_data(g, &data)?;
            let cast = casting(g)?;
            let backend = backends::build(g.backend, &g.backend_opts, g.seed, &[&set])?;
            let (report, records) = probe(&set, &dataset_name(g, &data.data), grams, &cast, backend.as_ref())?;
            output::write_jsonl(&g.out_dir, "probe.predictions.jsonl", &records)?;
            let bundle = ReportBundle { probes: vec![report], ..Default::default() };
            output::emit(&g.out_dir, "probe", &bundle, g.format)?;
            Ok(())
        }
        Command::Zeroshot { data, targets, max_grams } => {
            let set = load_data(g, &data)?;
            let cast = casting(g)?;
            let backend = backends::build(g.backend, &g.backend_opts, g.seed, &[&set])?;
            let targets: Vec<Target> = targets.into_iter().map(target).collect();
            let grams: Vec<usize> = (1..=max_grams).collect();
            let rows = zeroshot_sweep(&set, &dataset_name(g, &data.data), &targets, &grams, &cast, backend.as_ref())?;
            let records: Vec<_> = rows
                .iter()
                .flat_map(|r| r.records.iter().map(move |p| json!({"mode": r.report.mode, "record": p})))
                .collect();
            output::write_jsonl(&g.out_dir, "zeroshot.predictions.jsonl", &records)?;
            let bundle = ReportBundle {
                accuracy: rows.into_iter().map(|r| r.report).collect(),
                ..Default::default()
            };
            output::emit(&g.out_dir, "zeroshot", &bundle, g.format)?;
            Ok(())
        }
        Command::Train(args) => train(g, &args),
        Command::Report { inputs } => {
            let mut bundle = ReportBundle::default();
            for path in &inputs {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ssm_core::Error::Io { path: path.clone(), source: e })?;
                let part = ReportBundle::from_json(&text)
                    .map_err(|e| ssm_core::Error::Parse { path: path.display().to_string(), line: 0, message: e.to_string() })?;
                bundle.merge(part);
            }
            output::emit(&g.out_dir, "report", &bundle, g.format)?;
            Ok(())
        }
        Command::Convert { data, output } => {
            let set = load_data(g, &data)?;
            set.write_canonical(&output)?;
            eprintln!("wrote {} examples to {}", set.len(), output.display());
            Ok(())
        }
        Command::Synth { kind, count, choices, prefix, output, corpus_output } => {
            synth(g, kind, count, choices, &prefix, &output, corpus_output.as_deref())
        }
    }
}

fn cast(g: &Global, data: &Data) -> Result<()> {
    let set = load_data(g, data)?;
    let cast = casting(g)?;
    let mut rows = Vec::new();
    for ex in &set {
        for i in 0..ex.num_hypotheses() {
            let full = cast.to_full_text(ex, i).map_err(|e| e.in_example(&ex.id))?;
            let separated = cast.to_separated_sentence(ex, i).map_err(|e| e.in_example(&ex.id))?;
            println!("{}\t{}\t{}\t{}", ex.id, i, full.render(), separated.render());
            rows.push(json!({
                "id": ex.id,
                "hypothesis": i,
                "full_text": full.render(),
                "separated": separated.render(),
                "premise_span": [full.premise_span.start, full.premise_span.end],
                "hypothesis_span": [full.hypothesis_span.start, full.hypothesis_span.end],
            }));
        }
    }
    output::write_jsonl(&g.out_dir, "cast.jsonl", &rows)?;
    Ok(())
}

fn train_config(g: &Global, args: &TrainArgs) -> TrainConfig {
    let base = if args.large_model {
        TrainConfig::large_model()
    } else {
        TrainConfig::default()
    };
    TrainConfig {
        learning_rate: args.lr.unwrap_or(base.learning_rate),
        warmup_ratio: args.warmup_ratio.unwrap_or(base.warmup_ratio),
        weight_decay: args.weight_decay.unwrap_or(base.weight_decay),
        batch_size: args.batch_size.unwrap_or(base.batch_size),
        epochs: args.epochs.unwrap_or(base.epochs),
        seed: g.seed,
        train_fraction: 1.0,
    }
}

fn train(g: &Global, args: &TrainArgs) -> Result<()> {
    if g.backend != crate::args::BackendKind::Tiny {
        return Err(usage("train needs --backend tiny (the only differentiable backend)"));
    }
    let splits = Splits {
        train: load(g, &args.train, "train")?,
        val: load(g, &args.val, "val")?,
        test: load(g, &args.test, "test")?,
    };
    let cast = casting(g)?;
    let base = backends::tiny(&g.backend_opts, g.seed, &[&splits.train, &splits.val, &splits.test])?;
    let seeds: Vec<u64> = match args.num_seeds {
        Some(n) => (0..n).collect(),
        None if args.seeds.is_empty() => vec![g.seed],
        None => args.seeds.clone(),
    };
    let settings: Vec<Setting> = args.setting.iter().copied().map(setting).collect();
    let loss = MarginLossConfig { eta: args.eta, target: target(args.target), grams: args.grams };
    let template = train_config(g, args);
    template.validate().map_err(|e| usage(e.to_string()))?;

    if let Some(path) = &args.save_checkpoint {
        if seeds.len() != 1 || settings != [Setting::Ours] || args.train_fraction.len() != 1 {
            return Err(usage("--save-checkpoint needs exactly one seed, --setting ours and one --train-fraction"));
        }
        let config = TrainConfig { seed: seeds[0], train_fraction: args.train_fraction[0], ..template.clone() };
        let (model, outcome) = train_ssm(&splits.train, &splits.val, base.clone(), &loss, &config, &cast)?;
        model.save(path)?;
        output::write_jsonl(&g.out_dir, "train.history.jsonl", &outcome.history)?;
        eprintln!(
            "saved {} parameters from epoch {} (val {:.3}) to {}",
            model.parameters().len(),
            outcome.best_epoch,
            outcome.best_val_accuracy,
            path.display()
        );
    }

    let mut runs: Vec<RunReport> = Vec::new();
    for &fraction in &args.train_fraction {
        let config = TrainConfig { train_fraction: fraction, ..template.clone() };
        config.validate().map_err(|e| usage(e.to_string()))?;
        for &s in &settings {
            let report = stability_study(&seeds, s, fraction, |seed| {
                run_seed(s, seed, &splits, &base, &loss, &config, &cast)
            });
            for f in &report.failures {
                eprintln!("warning: {s} seed {} at fraction {fraction} failed: {}", f.seed, f.error);
            }
            runs.push(report);
        }
    }
    let records: Vec<_> = runs
        .iter()
        .flat_map(|r| {
            r.per_seed.iter().map(move |s| {
                json!({"setting": r.setting, "train_fraction": r.train_fraction, "seed": s.seed,
                       "best_val_accuracy": s.best_val_accuracy, "test_accuracy": s.test_accuracy})
            })
        })
        .collect();
    output::write_jsonl(&g.out_dir, "train.seeds.jsonl", &records)?;
    let bundle = ReportBundle { runs, ..Default::default() };
    output::write_json(&g.out_dir, "train.bundle.json", &serde_json::to_value(&bundle)?)?;
    output::emit(&g.out_dir, "train", &bundle, g.format)?;
    Ok(())
}

fn synth(
    g: &Global,
    kind: SynthKind,
    count: usize,
    choices: usize,
    prefix: &str,
    output: &Path,
    corpus_output: Option<&Path>,
) -> Result<()> {
    let (examples, corpus) = match kind {
        SynthKind::Separable => {
            let cfg = SeparableConfig { seed: g.seed, choices, ..SeparableConfig::default() };
            if choices < 2 || choices > cfg.topics {
                return Err(usage(format!("separable sets support 2..={} choices", cfg.topics)));
            }
            (cfg.generate(prefix, count), None)
        }
        SynthKind::ProbeBiased | SynthKind::ProbeUnbiased => {
            let f = probe_fixture(count, choices, kind == SynthKind::ProbeBiased, g.seed);
            let examples = f
                .examples
                .into_iter()
                .enumerate()
                .map(|(i, mut e)| {
                    e.id = format!("{prefix}-{i}");
                    e
                })
                .collect();
            (examples, Some(f.corpus))
        }
    };
    let set = ExampleSet::new(examples, Split::Train)?;
    set.write_canonical(output)?;
    if let (Some(path), Some(corpus)) = (corpus_output, corpus) {
        let text: String = corpus.iter().map(|s| s.join(" ") + "\n").collect();
        std::fs::write(path, text).map_err(|e| ssm_core::Error::Io { path: path.to_path_buf(), source: e })?;
    }
    eprintln!("wrote {} examples to {}", set.len(), output.display());
    Ok(())
}
