mod config;
mod pipeline;
mod providers;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sensemaker_core::adversarial::AdversarialError;
use sensemaker_core::corpus::CorpusError;
use sensemaker_core::embedmetrics::MetricError;
use sensemaker_core::lexmetrics::LexError;
use sensemaker_core::llmroles::RoleError;
use sensemaker_core::report::ReportError;
use sensemaker_core::ProviderError;

use crate::config::Overrides;
use crate::pipeline::Stage;

/// Failures sorted by exit code: 2 configuration, 3 provider, 4 data.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Provider(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration: {msg}"),
            CliError::Provider(msg) => write!(f, "provider: {msg}"),
            CliError::Data(msg) => write!(f, "data: {msg}"),
        }
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        CliError::Provider(e.to_string())
    }
}

impl From<RoleError> for CliError {
    fn from(e: RoleError) -> Self {
        match e {
            RoleError::Provider(p) => p.into(),
            RoleError::Argument(msg) => CliError::Data(msg),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LexError> for CliError {
    fn from(e: LexError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<AdversarialError> for CliError {
    fn from(e: AdversarialError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "sensemaker",
    version,
    about = "Quiz-based comprehension evaluation over a text corpus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; relative paths inside it resolve against
    /// its own directory.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Root seed override for every seeded choice.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// Chat endpoint override for http providers.
    #[arg(long, value_name = "URL")]
    provider_url: Option<String>,
    /// Chat model override.
    #[arg(long)]
    model: Option<String>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            cache_dir: self.cache_dir.clone(),
            provider_url: self.provider_url.clone(),
            model: self.model.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages in order; all of them unless --stage narrows it.
    Run {
        #[command(flatten)]
        common: Common,
        /// Stage to run; repeat the flag to chain several.
        #[arg(long, value_enum)]
        stage: Vec<Stage>,
    },
    /// Score and rank the question sets already in the corpus.
    ScoreTeacher {
        #[command(flatten)]
        common: Common,
    },
    /// Score answer sets against the reference answers.
    ScoreStudent {
        #[command(flatten)]
        common: Common,
    },
    /// Aggregate ratings into the evaluator tables.
    ScoreEvaluator {
        #[command(flatten)]
        common: Common,
    },
    /// Write the manual review sheets for the corpus answers.
    ExportQuestionnaire {
        #[command(flatten)]
        common: Common,
    },
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { common, stage } => {
            let cfg = config::load(&common.config, &common.overrides())?;
            let providers = providers::build(&cfg)?;
            let stages = if stage.is_empty() { Stage::ALL.to_vec() } else { stage };
            pipeline::cmd_run(&cfg, &providers, &stages)
        }
        Command::ScoreTeacher { common } => {
            let cfg = config::load(&common.config, &common.overrides())?;
            let providers = providers::build(&cfg)?;
            pipeline::cmd_score_teacher(&cfg, &providers)
        }
        Command::ScoreStudent { common } => {
            let cfg = config::load(&common.config, &common.overrides())?;
            pipeline::cmd_score_student(&cfg)
        }
        Command::ScoreEvaluator { common } => {
            let cfg = config::load(&common.config, &common.overrides())?;
            pipeline::cmd_score_evaluator(&cfg)
        }
        Command::ExportQuestionnaire { common } => {
            let cfg = config::load(&common.config, &common.overrides())?;
            pipeline::cmd_export_questionnaire(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
