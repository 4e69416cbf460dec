mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "smartvl", version, about = "Visio-linguistic puzzle pipeline: synth, caption, train, infer, eval")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed (overrides `seed` in the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic puzzle set (manifest + PNGs).
    Synth(SynthArgs),
    /// Run two-stage caption enhancement over a puzzle set.
    Caption(CaptionArgs),
    /// Train the key or value specialist.
    Train(TrainArgs),
    /// Route every puzzle and write predictions.
    Infer(InferArgs),
    /// Score predictions.
    Eval(EvalArgs),
    /// Monte-Carlo accuracy under an imperfect key/value router.
    SimulateRouting(SimulateArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub n_per_category: usize,
    #[arg(long)]
    pub image_size: Option<u32>,
}

#[derive(Args)]
pub struct CaptionArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// `mock`, `echo` or `http`.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Key,
    Value,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub role: RoleArg,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub captions: Option<PathBuf>,
    /// Checkpoint file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics JSON Lines file (default: `<out>.metrics.jsonl`).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Additional multiple-choice records (JSON Lines) mixed into batches.
    #[arg(long)]
    pub additional: Option<PathBuf>,
    /// Train without captions (empty caption block).
    #[arg(long)]
    pub no_captions: bool,
    #[arg(long)]
    pub epochs: Option<f64>,
    #[arg(long)]
    pub base_lr: Option<f64>,
    #[arg(long)]
    pub lora_lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub mix_ratio: Option<f64>,
    /// Train on every category instead of the role's own.
    #[arg(long)]
    pub all_categories: bool,
}

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub key_ckpt: PathBuf,
    #[arg(long)]
    pub value_ckpt: PathBuf,
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long)]
    pub no_captions: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON Lines of `{"puzzle_id", "modality": "text"|"vl"}`.
    #[arg(long)]
    pub tags: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Row label in the printed table.
    #[arg(long, default_value = "smartvl")]
    pub method: String,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub p_kind: f64,
    #[arg(long)]
    pub key_acc: f64,
    #[arg(long)]
    pub value_acc: f64,
    #[arg(long, default_value_t = 0.2)]
    pub misrouted_key_acc: f64,
    #[arg(long, default_value_t = 0.2)]
    pub misrouted_value_acc: f64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    /// Comma-separated true kinds (`key`/`value`); defaults to one entry
    /// per skill category.
    #[arg(long)]
    pub kinds: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?.with_seed(cli.seed);
    match cli.command {
        Command::Synth(a) => commands::synth(cfg, a),
        Command::Caption(a) => commands::caption(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Infer(a) => commands::infer(cfg, a),
        Command::Eval(a) => commands::eval(cfg, a),
        Command::SimulateRouting(a) => commands::simulate(cfg, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
