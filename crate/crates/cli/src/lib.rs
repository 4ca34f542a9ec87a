//! Command-line front end for `stressbench`.
//!
//! Exit codes: `0` success, `2` a run finished with failed perturbation
//! passes, `1` any fatal error.
//!
//! Environment overrides: `STRESSBENCH_OUT` for `--out` of `run` and
//! `metrics`, `STRESSBENCH_WORKERS` for `run --workers`.

mod commands;
mod stub;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stressbench::metrics::ThresholdPolicy;
use stressbench::perturb::PerturbationKind;

pub use commands::parse_attribute;

#[derive(Debug, Parser)]
#[command(name = "stressbench", version, about = "Progressive image-perturbation stress testing with subgroup-stratified metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply one perturbation to an image, or render all of them as a contact sheet.
    Perturb(PerturbArgs),
    /// List the perturbation suite with resolved parameters.
    Suite(SuiteArgs),
    /// Run the clean baseline and the full perturbation sweep.
    Run(RunArgs),
    /// Compute clean metrics and disparities from an existing prediction file.
    Metrics(MetricsArgs),
    /// Generate a seeded synthetic dataset with stub scores.
    Synth(SynthArgs),
    /// Check a manifest against its config.
    Validate(ValidateArgs),
    /// Compare two result directories cell by cell.
    Compare(CompareArgs),
    /// Serve a stub scorer on stdin/stdout.
    StubScorer(StubArgs),
    /// Replay a protocol transcript against a scorer command.
    Conformance(ConformanceArgs),
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Input image (PNG or JPEG).
    pub input: PathBuf,
    /// Output PNG.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Perturbation kind; required unless --grid is given.
    #[arg(long, required_unless_present = "grid")]
    pub kind: Option<PerturbationKind>,
    /// Signed severity level (-3..-1, 1..3; blur 1..6).
    #[arg(long, allow_hyphen_values = true, required_unless_present = "grid")]
    pub level: Option<i32>,
    /// Write a contact sheet of every suite perturbation instead.
    #[arg(long, conflicts_with_all = ["kind", "level"])]
    pub grid: bool,
    /// Tiles per row of the contact sheet.
    #[arg(long, default_value_t = 6)]
    pub columns: usize,
    /// Longest tile side of the contact sheet, in pixels.
    #[arg(long, default_value_t = 128)]
    pub tile: usize,
    /// Config whose suite section sets severities and levels.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    /// Config whose suite section sets severities and levels.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Fixed,
    F1OptimalOnClean,
}

impl From<PolicyArg> for ThresholdPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Fixed => ThresholdPolicy::Fixed,
            PolicyArg::F1OptimalOnClean => ThresholdPolicy::F1OptimalOnClean,
        }
    }
}

/// Scorer source; overrides the config's `[scorer]` section.
#[derive(Debug, Args, Default)]
pub struct ScorerArgs {
    /// Scorer command line, split shell-style, e.g. "python3 adapter.py --model m.pt".
    #[arg(long, conflicts_with_all = ["scorer_url", "predictions"])]
    pub scorer_cmd: Option<String>,
    /// HTTP endpoint accepting the protocol's JSON bodies.
    #[arg(long, conflicts_with = "predictions")]
    pub scorer_url: Option<String>,
    /// Prediction CSV with a `perturbation` column covering every pass.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, env = "STRESSBENCH_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    /// Parallel scorer instances; defaults to the available parallelism.
    #[arg(long, env = "STRESSBENCH_WORKERS")]
    pub workers: Option<usize>,
    /// Images per scoring request.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub threshold_policy: Option<PolicyArg>,
    /// Reuse thresholds from a `thresholds.json` written by an earlier run.
    #[arg(long)]
    pub frozen_thresholds: Option<PathBuf>,
    /// Calibration bins for ECE.
    #[arg(long)]
    pub ece_bins: Option<usize>,
    /// Retries per failing perturbation pass.
    #[arg(long)]
    pub retries: Option<usize>,
    /// Continue a previous run in --out, scoring only missing or failed passes.
    #[arg(long)]
    pub resume: bool,
    /// Keep perturbed images under <out>/images.
    #[arg(long)]
    pub keep_images: bool,
    /// Seconds to wait for a scorer's handshake.
    #[arg(long, default_value_t = 30)]
    pub handshake_timeout: u64,
    /// Seconds to wait for one scoring request.
    #[arg(long, default_value_t = 300)]
    pub job_timeout: u64,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Config naming the manifest and subgroups.
    #[arg(long)]
    pub config: PathBuf,
    /// Prediction CSV; defaults to the config's `scorer.predictions`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "STRESSBENCH_OUT")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub threshold_policy: Option<PolicyArg>,
    #[arg(long)]
    pub ece_bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Number of samples.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Image side length.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Comma-separated class names.
    #[arg(long, value_delimiter = ',', default_value = "Finding A,Finding B")]
    pub classes: Vec<String>,
    /// Comma-separated positive fractions, one per class (default 0.5 each).
    #[arg(long, value_delimiter = ',')]
    pub prevalence: Vec<f64>,
    /// Categorical attribute, `name=value:p,value:p,...`; repeatable. Defaults
    /// to race=White:0.4,Asian:0.3,Black:0.3 and sex=Female:0.5,Male:0.5.
    #[arg(long = "attribute")]
    pub attributes: Vec<String>,
    /// Numeric attribute drawn uniformly, `name=min:max`; repeatable.
    #[arg(long = "numeric")]
    pub numeric: Vec<String>,
    /// Class separability of the stub scores, 0 (chance) to 1 (perfect).
    #[arg(long, default_value_t = 0.8)]
    pub separability: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Also check that every image file exists.
    #[arg(long)]
    pub check_files: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Result directory of run A.
    pub a: PathBuf,
    /// Result directory of run B.
    pub b: PathBuf,
    /// Where to write comparison.csv and stability.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StubMode {
    /// Same score for every class and image.
    Constant,
    /// Mean pixel value for every class.
    Echo,
    /// Fixed per-id scores from --scores, ignoring pixels.
    Table,
    /// --scores mixed with per-sample noise in proportion to severity.
    Degrade,
}

#[derive(Debug, Args)]
pub struct StubArgs {
    /// Config naming the dataset (and the suite, for `degrade`).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    pub mode: StubMode,
    /// Score returned in `constant` mode.
    #[arg(long, default_value_t = 0.5)]
    pub value: f32,
    /// Clean score CSV for `table` and `degrade`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Seed of the per-sample noise in `degrade` mode.
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    /// Refuse every image of this perturbation kind.
    #[arg(long)]
    pub fail_kind: Option<PerturbationKind>,
    /// Identity reported in the handshake.
    #[arg(long)]
    pub identity: Option<String>,
}

#[derive(Debug, Args)]
pub struct ConformanceArgs {
    /// Transcript file (`> ` requests, `< ` expected replies).
    #[arg(long, required = true)]
    pub transcript: Vec<PathBuf>,
    /// Scorer command line, split shell-style.
    #[arg(long)]
    pub scorer_cmd: String,
    /// Seconds to wait for each reply.
    #[arg(long, default_value_t = 30)]
    pub timeout: u64,
}

/// Outcome of a subcommand that did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    Partial,
}

pub fn run(cli: Cli) -> anyhow::Result<Status> {
    match cli.command {
        Command::Perturb(a) => commands::perturb(a),
        Command::Suite(a) => commands::suite(a),
        Command::Run(a) => commands::run(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Synth(a) => commands::synth(a),
        Command::Validate(a) => commands::validate(a),
        Command::Compare(a) => commands::compare(a),
        Command::StubScorer(a) => stub::serve_stub(a),
        Command::Conformance(a) => commands::conformance(a),
    }
}

/// Parses arguments, runs, and maps the outcome to the exit-code contract.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Status::Complete) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
