use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ssm", version, about = "Masked-LM sequence scoring for multiple-choice commonsense tasks")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Language model used for scoring.
    #[arg(long, global = true, value_enum, default_value_t = BackendKind::Count)]
    pub backend: BackendKind,

    /// Casting rules (TOML) replacing the built-in ones.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Directory receiving reports and prediction records.
    #[arg(long, global = true, default_value = "ssm-out")]
    pub out_dir: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,

    /// Input file layout.
    #[arg(long, global = true, value_enum, default_value_t = DatasetKind::Canonical)]
    pub dataset: DatasetKind,

    #[command(flatten)]
    pub backend_opts: BackendOpts,
}

#[derive(Debug, Args)]
pub struct BackendOpts {
    /// Count backend: training corpus, one sentence per line. Defaults to
    /// the text of the scored data.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = CountKind::Bigram)]
    pub count_mode: CountKind,

    /// Count backend additive smoothing.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub smoothing: f64,

    /// Tiny backend: load parameters from this checkpoint.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,

    /// Tiny backend: embedding width for a freshly initialized model.
    #[arg(long, global = true, default_value_t = 16)]
    pub embed_dim: usize,

    #[arg(long, global = true)]
    pub backend_url: Option<String>,

    #[arg(long, global = true, default_value_t = 30_000)]
    pub backend_timeout_ms: u64,

    #[arg(long, global = true, default_value_t = 2)]
    pub backend_retries: usize,

    #[arg(long, global = true, default_value_t = 64)]
    pub backend_max_batch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Count,
    Tiny,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CountKind {
    Unigram,
    Bigram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
    Plotdata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Copa,
    Csqa,
    Swag,
    Hellaswag,
    Canonical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Premise,
    Hypothesis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SettingArg {
    Ours,
    HeadCe,
    HeadMargin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Separable,
    ProbeBiased,
    ProbeUnbiased,
}

#[derive(Debug, Args)]
pub struct Data {
    /// Dataset file.
    pub data: PathBuf,

    /// Split label; for CommonsenseQA `val` and `test_star` carve the file.
    #[arg(long, default_value = "val")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct Scoring {
    #[arg(long, value_enum, default_value_t = TargetArg::Premise)]
    pub target: TargetArg,

    /// Cumulative n-gram order.
    #[arg(long, default_value_t = 1)]
    pub grams: usize,

    /// Exchange the COPA so/because conjunction.
    #[arg(long)]
    pub swap_conjunction: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the full-text and separated-sentence casts of every hypothesis.
    Cast {
        #[command(flatten)]
        data: Data,
    },
    /// Rank hypotheses and report accuracy.
    Score {
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        scoring: Scoring,
    },
    /// Hypothesis-only accuracy against the random baseline.
    Probe {
        #[command(flatten)]
        data: Data,
        #[arg(long, default_value_t = 1)]
        grams: usize,
    },
    /// Accuracy for every (target, n) combination.
    Zeroshot {
        #[command(flatten)]
        data: Data,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [TargetArg::Premise, TargetArg::Hypothesis])]
        targets: Vec<TargetArg>,
        /// Largest n; rows run over 1..=n.
        #[arg(long, default_value_t = 1)]
        max_grams: usize,
    },
    /// Fine-tune the tiny backend under one or more settings and seeds.
    Train(TrainArgs),
    /// Merge JSON report bundles and render them.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Rewrite a dataset file in the canonical line format.
    Convert {
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic dataset in the canonical line format.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::Separable)]
        kind: SynthKind,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 2)]
        choices: usize,
        /// Prefix of example ids.
        #[arg(long, default_value = "syn")]
        prefix: String,
        #[arg(long)]
        output: PathBuf,
        /// Probe kinds: also write the count-backend corpus here.
        #[arg(long)]
        corpus_output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub test: PathBuf,

    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [SettingArg::Ours])]
    pub setting: Vec<SettingArg>,

    /// Seeds to run; defaults to the global --seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,

    /// Run seeds 0..N instead of an explicit list.
    #[arg(long, conflicts_with = "seeds")]
    pub num_seeds: Option<u64>,

    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub train_fraction: Vec<f64>,

    #[arg(long, default_value_t = ssm_core::training::DEFAULT_ETA)]
    pub eta: f64,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub warmup_ratio: Option<f64>,

    #[arg(long)]
    pub weight_decay: Option<f64>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub epochs: Option<usize>,

    /// Use the published large-model hyperparameters as defaults.
    #[arg(long)]
    pub large_model: bool,

    /// Score target used by the `ours` setting.
    #[arg(long, value_enum, default_value_t = TargetArg::Premise)]
    pub target: TargetArg,

    #[arg(long, default_value_t = 1)]
    pub grams: usize,

    /// Save the trained model (single seed, `ours`, one fraction only).
    #[arg(long)]
    pub save_checkpoint: Option<PathBuf>,
}
