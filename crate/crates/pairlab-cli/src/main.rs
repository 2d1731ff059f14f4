use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pairlab::codec::TargetStyle;
use pairlab::corpus::Split;
use pairlab::trainer::Profile;
use pairlab_cli::{
    cmd_codec, cmd_compare, cmd_export, cmd_stats, cmd_synth, cmd_train, resolve_seeds,
    CliResult, CodecDirection, CompareRequest, ExportRequest, SynthRequest, TrainOverrides,
    TrainRequest,
};

/// Aspect-opinion pairing laboratory: corpora, target codecs, contrastive
/// training and evaluation.
#[derive(Parser)]
#[command(name = "pairlab", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-split dataset statistics as TSV.
    Stats(StatsArgs),
    /// Generate a seeded synthetic corpus file.
    Synth(SynthArgs),
    /// Train encoder and pairing parameters.
    Train(TrainArgs),
    /// Compare the random / linear / contrastive pairing strategies.
    Compare(CompareArgs),
    /// Export candidate pair embeddings as a 2D CSV dump.
    Export(ExportArgs),
    /// Encode triplets to target strings or decode target strings back.
    Codec(CodecArgs),
}

#[derive(Args)]
struct StatsArgs {
    /// Dataset files (dataset and split are inferred from the path).
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Override the inferred dataset name.
    #[arg(long)]
    dataset: Option<String>,
    /// Override the inferred split (train, val, test).
    #[arg(long)]
    split: Option<Split>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    sentences: usize,
    #[arg(long, default_value_t = 200)]
    vocab: usize,
    #[arg(long, default_value_t = 1)]
    min_aspects: usize,
    #[arg(long, default_value_t = 3)]
    max_aspects: usize,
    #[arg(long, default_value_t = 1)]
    min_opinions: usize,
    #[arg(long, default_value_t = 3)]
    max_opinions: usize,
    #[arg(long, default_value_t = 2)]
    max_term_tokens: usize,
    /// Use the linearly separable gold-pair structure.
    #[arg(long)]
    separable: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "desk")]
    profile: Profile,
    /// JSON config file overlaying the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seed list; one training run per seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    pair_desc: Option<String>,
    #[arg(long)]
    unpair_desc: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory for compare.tsv + manifest (stdout only if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    split: Option<Split>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    split: Option<Split>,
}

#[derive(Args)]
struct CodecArgs {
    /// Encode: dataset lines. Decode: `sentence####target` lines.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    style: TargetStyle,
    #[arg(long, default_value = "encode")]
    direction: String,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Stats(args) => {
            print!("{}", cmd_stats(&args.files, &args.dataset, &args.split)?);
        }
        Command::Synth(args) => {
            let seed = resolve_seeds(&None, args.seed)?[0];
            print!(
                "{}",
                cmd_synth(&SynthRequest {
                    out_path: args.out,
                    sentences: args.sentences,
                    vocab_size: args.vocab,
                    min_aspects: args.min_aspects,
                    max_aspects: args.max_aspects,
                    min_opinions: args.min_opinions,
                    max_opinions: args.max_opinions,
                    max_term_tokens: args.max_term_tokens,
                    separable: args.separable,
                    seed,
                })?
            );
        }
        Command::Train(args) => {
            let seeds = resolve_seeds(&args.seeds, args.seed)?;
            let summary = cmd_train(&TrainRequest {
                train_path: args.train,
                val_path: args.val,
                out_dir: args.out,
                profile: args.profile,
                config_file: args.config,
                flag_overrides: TrainOverrides {
                    learning_rate: args.lr,
                    batch_size: args.batch_size,
                    epochs: args.epochs,
                    dropout: args.dropout,
                    alpha: args.alpha,
                    beta: args.beta,
                    tau: args.tau,
                    pair_description: args.pair_desc,
                    unpair_description: args.unpair_desc,
                },
                seeds,
                dataset: args.dataset,
            })?;
            print!("{summary}");
        }
        Command::Compare(args) => {
            let seeds = resolve_seeds(&args.seeds, args.seed)?;
            let tsv = cmd_compare(&CompareRequest {
                data_path: args.data,
                checkpoint_path: args.checkpoint,
                out_dir: args.out,
                seeds,
                dataset: args.dataset,
                split: args.split,
            })?;
            print!("{tsv}");
        }
        Command::Export(args) => {
            cmd_export(&ExportRequest {
                data_path: args.data,
                checkpoint_path: args.checkpoint,
                out_dir: args.out,
                dataset: args.dataset,
                split: args.split,
            })?;
        }
        Command::Codec(args) => {
            let direction: CodecDirection = args.direction.parse()?;
            let out = cmd_codec(&args.input, args.style, direction)?;
            print!("{}", out.stdout);
            eprint!("{}", out.stderr);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version exit 0; anything else is a usage error.
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
