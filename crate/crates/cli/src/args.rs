//! Command-line surface. Every argument struct serializes into the run
//! manifest as the resolved configuration.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kwgen::bench::{TimingConfig, DEFAULT_THRESHOLD};
use kwgen::corpus::SyntheticSpec;
use kwgen::decode::Strategy;
use kwgen::model::TrainHyper;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "kwgen",
    version,
    about = "Generative keyword retrieval into a closed keyword set"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus, keyword set, benchmark queries and traffic log
    GenData(GenDataArgs),
    /// Build a frequency-ranked vocabulary from a corpus
    BuildVocab(BuildVocabArgs),
    /// Train the encoder-decoder with the self-normalizing loss
    Train(TrainArgs),
    /// Average suffix-set size per trie depth, as CSV
    TrieStats(TrieStatsArgs),
    /// Decode queries into keywords
    Decode(DecodeArgs),
    /// Time decoding strategies across beam sizes
    Bench(BenchArgs),
    /// Decode the frequent queries of a traffic log into a store
    Precompute(PrecomputeArgs),
    /// Answer line-delimited JSON requests over TCP
    Serve(ServeArgs),
    /// Run every stage on default settings into one directory
    Pipeline(PipelineArgs),
    /// Rerun a recorded command into a new directory and compare outputs
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::BuildVocab(_) => "build-vocab",
            Command::Train(_) => "train",
            Command::TrieStats(_) => "trie-stats",
            Command::Decode(_) => "decode",
            Command::Bench(_) => "bench",
            Command::Precompute(_) => "precompute",
            Command::Serve(_) => "serve",
            Command::Pipeline(_) => "pipeline",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = SyntheticSpec::default().seed)]
    pub seed: u64,
    /// Query→title pairs in the corpus
    #[arg(long, default_value_t = SyntheticSpec::default().num_pairs)]
    pub pairs: usize,
    /// Distinct keywords
    #[arg(long, default_value_t = SyntheticSpec::default().keyword_count)]
    pub keywords: usize,
    /// Query templates in use
    #[arg(long, default_value_t = SyntheticSpec::default().template_count)]
    pub templates: usize,
    /// Share of keywords that also occur as corpus titles
    #[arg(long, default_value_t = SyntheticSpec::default().overlap_fraction)]
    pub overlap: f64,
    /// Benchmark queries
    #[arg(long, default_value_t = 200)]
    pub queries: usize,
    /// Distinct queries in the traffic log
    #[arg(long, default_value_t = 500)]
    pub log_queries: usize,
    /// Requests in the traffic log
    #[arg(long, default_value_t = 5000)]
    pub log_draws: usize,
    /// Zipf exponent of the traffic log
    #[arg(long, default_value_t = 1.0)]
    pub zipf_exponent: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Vocabulary size including the three reserved tokens
    #[arg(long, default_value_t = 512)]
    pub max_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Single-layer GRU, embed 32, hidden 64
    Desk,
    /// Four-layer residual LSTM, hidden 512
    Offline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellArg {
    Gru,
    Lstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionArg {
    Additive,
    Dot,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Parameter file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch metrics as JSON lines [default: <out>.metrics.jsonl]
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Architecture to start from; the flags below override it
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long, value_enum)]
    pub cell: Option<CellArg>,
    #[arg(long)]
    pub encoder_layers: Option<usize>,
    #[arg(long)]
    pub decoder_layers: Option<usize>,
    /// Disable residual connections (only valid with single-layer stacks)
    #[arg(long)]
    pub no_residual: bool,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long, value_enum)]
    pub attention: Option<AttentionArg>,
    #[arg(long, default_value_t = TrainHyper::desk().learning_rate)]
    pub learning_rate: f64,
    /// Per-epoch multiplicative learning-rate decay
    #[arg(long, default_value_t = TrainHyper::desk().lr_decay)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = TrainHyper::desk().batch_size)]
    pub batch_size: usize,
    /// Weight of the squared log-partition penalty
    #[arg(long, default_value_t = TrainHyper::desk().beta, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, default_value_t = TrainHyper::desk().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainHyper::desk().seed)]
    pub seed: u64,
    /// Share of pairs held out for the log-partition metric
    #[arg(long, default_value_t = TrainHyper::desk().holdout_fraction)]
    pub holdout: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrieStatsArgs {
    #[arg(long)]
    pub keywords: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Also write the CSV here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BeamArgs {
    #[arg(long, default_value_t = 40)]
    pub beam: usize,
    /// Output threshold on the log score; results must score above it
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, allow_hyphen_values = true)]
    pub threshold: f64,
    /// Search the full vocabulary instead of the keyword trie
    #[arg(long)]
    pub no_trie: bool,
    /// Normalize scores with the full softmax
    #[arg(long)]
    pub no_self_norm: bool,
    /// Keep hypotheses below the threshold until the end
    #[arg(long)]
    pub no_drop_otf: bool,
    /// Step budget [default: 2 × trie depth + 2]
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelInputs {
    /// Parameter file
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Keyword file, one per line
    #[arg(long)]
    pub keywords: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["query", "queries"])))]
pub struct DecodeArgs {
    #[command(flatten)]
    pub model: ModelInputs,
    /// A single query; prints a JSON array of results
    #[arg(long)]
    pub query: Option<String>,
    /// A query file; prints one JSON object per query
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Write results here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub beam: BeamArgs,
}

fn parse_strategy(label: &str) -> Result<Strategy, String> {
    Strategy::from_label(label).ok_or_else(|| {
        let known: Vec<&str> = Strategy::ALL.iter().map(|s| s.label()).collect();
        format!("unknown strategy {label:?}, expected one of {}", known.join(", "))
    })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelInputs,
    /// Query file, one per line
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "40,60,80,100")]
    pub beams: Vec<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_strategy,
        default_value = "baseline,sn+tp,sn+tp+dropotf"
    )]
    pub strategies: Vec<Strategy>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, allow_hyphen_values = true)]
    pub threshold: f64,
    #[arg(long, default_value_t = TimingConfig::default().warmup_passes)]
    pub warmup: usize,
    #[arg(long, default_value_t = TimingConfig::default().repetitions)]
    pub repetitions: usize,
    /// Also measure output validity without the trie at these beam sizes
    #[arg(long, value_delimiter = ',')]
    pub validity_beams: Vec<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PrecomputeArgs {
    /// Traffic log, one query per line
    #[arg(long)]
    pub query_log: PathBuf,
    /// Offline model inputs
    #[command(flatten)]
    pub model: ModelInputs,
    /// Minimum log count for a query to be precomputed
    #[arg(long, conflicts_with = "top_percent")]
    pub min_count: Option<u64>,
    /// Precompute the most frequent share of distinct queries [default: 20]
    #[arg(long)]
    pub top_percent: Option<f64>,
    #[command(flatten)]
    pub beam: BeamArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ServeArgs {
    /// Precomputed store (JSON lines)
    #[arg(long)]
    pub store: PathBuf,
    /// Online model inputs
    #[command(flatten)]
    pub model: ModelInputs,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// TCP port; 0 picks a free one
    #[arg(long, default_value_t = 7878)]
    pub port: u16,
    #[command(flatten)]
    pub beam: BeamArgs,
    /// Send every query of this log through the service, report counters and exit
    #[arg(long, requires = "out_dir")]
    pub replay: Option<PathBuf>,
    /// Where the replay report goes
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = SyntheticSpec::default().seed)]
    pub seed: u64,
    /// Override the corpus size
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Override the keyword count
    #[arg(long)]
    pub keywords: Option<usize>,
    /// Override the training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Override the benchmark beam sizes
    #[arg(long, value_delimiter = ',')]
    pub beams: Vec<usize>,
    /// Override the benchmark repetitions
    #[arg(long)]
    pub repetitions: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the rerun's outputs
    #[arg(long)]
    pub out_dir: PathBuf,
}
