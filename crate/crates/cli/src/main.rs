mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

/// Convert, train, parse and evaluate unified semantic graphs.
#[derive(Debug, Parser)]
#[command(name = "unidag", version)]
pub struct Cli {
    /// Seed for every random choice; overrides the training config.
    #[arg(long, global = true, env = "UNIDAG_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for per-sentence work (0 = all cores); 1 unless
    /// the training config says otherwise.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a corpus between formats.
    Convert(ConvertArgs),
    /// Train a model from a TOML configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Parse sentences with a trained model.
    Parse(ParseArgs),
    /// Score predicted graphs against gold graphs.
    Evaluate(EvaluateArgs),
    /// Reconstruct every graph with the oracle and report the F1.
    OracleCheck(OracleArgs),
    /// Compare two corpora.
    Stats(StatsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Native,
    Conllu,
    Sdp,
    ConceptJson,
    Ucca,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Native,
    Conllu,
    Sdp,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub from: InputFormat,
    #[arg(long, value_enum)]
    pub to: OutputFormat,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output file, `-` for standard output.
    #[arg(long)]
    pub out: PathBuf,
    /// Skip malformed records instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Task whose classifier is used; the main task by default.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Input format; guessed from the extension if absent.
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// Output file (native format), `-` for standard output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// Ignore edge labels.
    #[arg(long)]
    pub unlabeled: bool,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Include per-sentence scores in the JSON report.
    #[arg(long)]
    pub per_sentence: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// Task configuration; labeled generic constraints if absent.
    #[arg(long)]
    pub task: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("measure").required(true).args(["l1", "overlap"])))]
pub struct StatsArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// L1 distance between word distributions.
    #[arg(long)]
    pub l1: bool,
    /// Unlabeled F1 of `a` against `b` over shared sentence ids.
    #[arg(long)]
    pub overlap: bool,
    /// Lowercase words before counting.
    #[arg(long)]
    pub lowercase: bool,
    #[arg(long)]
    pub json: bool,
}

/// Exit statuses.
pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const INTERNAL: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
