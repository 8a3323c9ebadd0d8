//! `iassess`: command-line driver for the interview assessment pipeline.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::LlmKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    /// Calls that still failed after retries; outputs are written first.
    #[error("{0}")]
    Provider(String),
    #[error(transparent)]
    Core(#[from] interview_assess::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Provider(_) => 3,
            CliError::Core(e) if e.is_provider() => 3,
            CliError::Data(_) | CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "iassess",
    version,
    about = "Segment, align and assess clinical interview transcripts"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the worker thread count from the config.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Log level for the JSON log lines on stderr.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Merge a diarized transcript with a verbatim one.
    Align {
        #[arg(long)]
        diarized: PathBuf,
        #[arg(long)]
        verbatim: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a hypothesis transcript against a reference.
    Score {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long, value_enum)]
        metric: Metric,
    },
    /// Locate sections and question sessions in a transcript.
    Segment {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict every variable of one interview.
    Assess {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, value_enum)]
        provider: Option<LlmKind>,
        /// zero, few_single or few_all.
        #[arg(long)]
        setting: Option<String>,
        /// Canned responses for the mock provider.
        #[arg(long)]
        mock: Option<PathBuf>,
        /// Gold assessments; the interview's notes feed the slot comparison.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against gold assessments.
    Evaluate {
        /// A run report, an interview report, or an array of interview reports.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus with planted truth.
    Synth {
        /// JSON or TOML generator spec.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the whole pipeline over the corpus named in --config.
    Run {
        /// Overrides paths.out from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Metric {
    Wer,
    Tder,
}

fn init_logging(level: log::LevelFilter) {
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("IASSESS_LOG")
        .format(|buf, record| {
            let line = serde_json::json!({
                "ts": buf.timestamp_millis().to_string(),
                "level": record.level().as_str(),
                "target": record.target(),
                "msg": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging(cli.log_level);
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
