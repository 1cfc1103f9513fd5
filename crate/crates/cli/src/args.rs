//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leakscope::gateway::{ProviderConfig, ProviderKind};
use leakscope::paths::DEFAULT_MAX_PATHS;

#[derive(Debug, Parser)]
#[command(
    name = "leakscope",
    version,
    about = "Find resource leaks in Java methods",
    args_conflicts_with_subcommands = true,
    subcommand_negates_reqs = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,

    #[command(flatten)]
    pub analyze: AnalyzeArgs,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay a benchmark of buggy/fixed method pairs and print metrics.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Provider {
    /// Hosted chat-completion model.
    Remote,
    /// Built-in knowledge table.
    Rules,
    /// Canned answers from --fixture-file.
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    /// Where resource intentions come from.
    #[arg(long, value_enum, default_value = "rules")]
    pub provider: Provider,

    /// JSON object mapping a snippet hash or `name@line` to answer text.
    #[arg(long, value_name = "FILE")]
    pub fixture_file: Option<PathBuf>,

    /// Model name sent to the remote provider.
    #[arg(long, default_value = "gpt-4")]
    pub model: String,

    /// Chat-completion URL of the remote provider.
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    pub endpoint: String,

    /// Directory for cached provider answers.
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,

    /// Request timeout for the remote provider, in seconds.
    #[arg(long, default_value_t = 120)]
    pub timeout: u64,

    /// Maximum remote requests per minute.
    #[arg(long, value_name = "N")]
    pub rpm: Option<u32>,
}

impl ProviderArgs {
    pub fn config(&self) -> ProviderConfig {
        ProviderConfig {
            kind: match self.provider {
                Provider::Remote => ProviderKind::RemoteChat,
                Provider::Rules => ProviderKind::RuleBased,
                Provider::Fixture => ProviderKind::Fixture,
            },
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            timeout_secs: self.timeout,
            requests_per_minute: self.rpm,
            cache_dir: self.cache_dir.clone(),
            fixture_file: self.fixture_file.clone(),
            ..ProviderConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Output format.
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,

    /// Give up on a method once it has more paths than this.
    #[arg(long, default_value_t = DEFAULT_MAX_PATHS, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub max_paths: usize,

    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Java files or directories to scan.
    #[arg(long, short, value_name = "PATH", required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,

    /// Only methods with this name, or the method containing this line.
    #[arg(long, value_name = "NAME|LINE")]
    pub method: Option<String>,

    #[command(flatten)]
    pub provider: ProviderArgs,

    #[command(flatten)]
    pub run: RunArgs,

    /// Print each method's control-flow graph.
    #[arg(long)]
    pub dump_cfg: bool,

    /// Print each method's enumerated paths.
    #[arg(long)]
    pub dump_paths: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// TOML dataset with one [[pair]] table per benchmark entry.
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,

    #[command(flatten)]
    pub provider: ProviderArgs,

    #[command(flatten)]
    pub run: RunArgs,
}
