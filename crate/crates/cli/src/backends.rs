use std::path::Path;

use anyhow::{Context, Result};
use ssm_core::backend::{
    CountBackend, CountMode, MaskedLm, RemoteBackend, RemoteConfig, TinyBackend, Vocab,
};
use ssm_core::datasets::{words, ExampleSet, Words};

use crate::args::{BackendKind, BackendOpts, CountKind};
use crate::usage;

fn read_corpus(path: &Path) -> Result<Vec<Words>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ssm_core::Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(text.lines().map(words).filter(|w| !w.is_empty()).collect())
}

/// Every premise and hypothesis of `sets`, as a fallback corpus.
fn data_corpus(sets: &[&ExampleSet]) -> Vec<Words> {
    sets.iter()
        .flat_map(|s| s.iter())
        .flat_map(|e| std::iter::once(e.premise.clone()).chain(e.hypotheses.iter().cloned()))
        .collect()
}

fn data_vocab(sets: &[&ExampleSet]) -> Vocab {
    Vocab::new(data_corpus(sets).into_iter().flatten())
}

pub fn tiny(opts: &BackendOpts, seed: u64, sets: &[&ExampleSet]) -> Result<TinyBackend> {
    match &opts.checkpoint {
        Some(path) => Ok(TinyBackend::load(path)?),
        None => Ok(TinyBackend::init(data_vocab(sets), opts.embed_dim, seed)?),
    }
}

pub fn build(
    kind: BackendKind,
    opts: &BackendOpts,
    seed: u64,
    sets: &[&ExampleSet],
) -> Result<Box<dyn MaskedLm>> {
    Ok(match kind {
        BackendKind::Count => {
            let corpus = match &opts.corpus {
                Some(path) => read_corpus(path)
                    .with_context(|| format!("reading corpus {}", path.display()))?,
                None => {
                    eprintln!("note: no --corpus given, fitting the count backend on the scored data");
                    data_corpus(sets)
                }
            };
            let mode = match opts.count_mode {
                CountKind::Unigram => CountMode::Unigram,
                CountKind::Bigram => CountMode::Bigram,
            };
            Box::new(CountBackend::fit(&corpus, opts.smoothing, mode)?)
        }
        BackendKind::Tiny => Box::new(tiny(opts, seed, sets)?),
        BackendKind::Remote => {
            let url = opts
                .backend_url
                .clone()
                .ok_or_else(|| usage("--backend remote needs --backend-url"))?;
            Box::new(RemoteBackend::new(RemoteConfig {
                url,
                timeout_ms: opts.backend_timeout_ms,
                retries: opts.backend_retries,
                max_batch: opts.backend_max_batch.max(1),
            }))
        }
    })
}
