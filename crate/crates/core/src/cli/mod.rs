//! Batch command-line surface: `fit`, `analyze`, `simulate`, `validate`.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 configuration error,
//! 3 data error, 4 sampler error, 5 chain and data do not match.

mod analyze;
pub mod config;
mod fit;
mod settings;
mod simulate;
mod validate;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::data::DataError;
use crate::model::ModelError;
use crate::sampler::SamplerError;
use crate::validation::ValidationError;

pub use analyze::{cmd_analyze, AnalyzeRequest, Artifact};
pub use config::Config;
pub use fit::cmd_fit;
pub use simulate::cmd_simulate;
pub use validate::cmd_validate;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("sampler: {0}")]
    Sampler(String),
    #[error("chain/data mismatch: {0}")]
    Mismatch(String),
    #[error("writing {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Output { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Sampler(_) => 4,
            CliError::Mismatch(_) => 5,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::UnknownAnchor(_) | DataError::InvalidSpec(_) => CliError::Config(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Config(_) | SamplerError::Model(ModelError::InvalidPrior(_)) => {
                CliError::Config(e.to_string())
            }
            SamplerError::Data(d) => d.into(),
            e => CliError::Sampler(e.to_string()),
        }
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        match e {
            ValidationError::InvalidSpec(_)
            | ValidationError::NoReplicates
            | ValidationError::RejectionStall { .. } => CliError::Config(e.to_string()),
            ValidationError::Sampler(s) => s.into(),
            ValidationError::Data(d) => d.into(),
            e => CliError::Sampler(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lacsh", version, about = "Spatial latent health factor model with GPS adjustment")]
struct Cli {
    /// Only report warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Configuration file (flat `key = value`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest data and run the sampler.
    Fit(CommonArgs),
    /// Summaries and plot data from a fitted chain.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        /// Chain CSV written by `fit`.
        #[arg(long)]
        chain: PathBuf,
        /// Chain metadata; defaults to the chain path with extension `meta`.
        #[arg(long)]
        meta: Option<PathBuf>,
        /// Dataset snapshot written by `fit`.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated artifacts, or `all`.
        #[arg(long, default_value = "all")]
        what: String,
    },
    /// Generate a synthetic panel, units table, truth file and fit config.
    Simulate(CommonArgs),
    /// Run the coverage, balance and LPML experiments.
    Validate(CommonArgs),
}

fn init_logging(quiet: bool) {
    let level = if quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Worker cap from `LACSH_THREADS`, if set.
fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("LACSH_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("LACSH_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

pub(crate) fn load_config(common: &CommonArgs) -> Result<Config, CliError> {
    match &common.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

pub(crate) fn output_dir(common: &CommonArgs, cfg: &Config) -> Result<PathBuf, CliError> {
    let dir = match (&common.out, cfg.path("output.dir")?) {
        (Some(o), _) => o.clone(),
        (None, Some(p)) => p,
        (None, None) => PathBuf::from("out"),
    };
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Output { path: dir.display().to_string(), message: e.to_string() })?;
    Ok(dir)
}

/// Create `dir/name` and hand a buffered writer to `f`.
pub(crate) fn write_file<F, E>(dir: &Path, name: &str, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), E>,
    E: std::fmt::Display,
{
    let path = dir.join(name);
    let out = |m: String| CliError::Output { path: path.display().to_string(), message: m };
    let file = File::create(&path).map_err(|e| out(e.to_string()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| out(e.to_string()))?;
    w.flush().map_err(|e| out(e.to_string()))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(c) => cmd_fit(&c),
        Command::Analyze { common, chain, meta, data, what } => {
            let artifacts = Artifact::parse_list(&what)?;
            cmd_analyze(&AnalyzeRequest { common, chain, meta, data, artifacts })
        }
        Command::Simulate(c) => cmd_simulate(&c),
        Command::Validate(c) => cmd_validate(&c),
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.quiet);
    let result = thread_cap().and_then(|cap| {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cap {
            b = b.num_threads(n);
        }
        let pool = b.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        pool.install(|| dispatch(cli.command))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
