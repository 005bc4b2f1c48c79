//! `clozecheck` binary: ingest a dataset, regenerate samples, score
//! passages, and evaluate the scores.
//!
//! Exit codes: 0 success, 2 configuration, 3 transport, 4 parse, 5 coverage.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use clozecheck_cli::{
    cmd_detect, cmd_evaluate, cmd_ingest, cmd_resample, parse_tasks, render_ingest_summary,
    CliError, EvaluateOptions, FileConfig, PassReport, RunConfig, EXIT_OK,
};
use clozecheck::dataset::Task;

#[derive(Parser)]
#[command(
    name = "clozecheck",
    version,
    about = "Zero-resource hallucination scoring for generated passages"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a dataset export into the native passage format.
    Ingest(IngestArgs),
    /// Regenerate sample passages for every subject.
    Resample(RunArgs),
    /// Score every passage with the requested methods.
    Detect(RunArgs),
    /// Compute the indicator matrix and report files from score files.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Dataset export (JSON Lines or a JSON array).
    #[arg(long)]
    input: PathBuf,
    /// Native output file (JSON Lines).
    #[arg(long)]
    output: PathBuf,
    /// Keep the passages excluded by default.
    #[arg(long)]
    keep_excluded: bool,
}

#[derive(Args, Default)]
struct RunArgs {
    /// Options file (TOML); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Annotated passage dataset (native or upstream export).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated methods: scgp, fibe, dq, sbc, ensemble.
    #[arg(long)]
    methods: Option<String>,
    /// Where sample passages come from: provided or resampled.
    #[arg(long)]
    samples_source: Option<String>,
    /// Examinee / sample count N.
    #[arg(long)]
    n: Option<usize>,
    /// Snowballing-correction threshold.
    #[arg(long)]
    theta: Option<f64>,
    /// Ensemble weight of the exam score (requires --cd and --cp).
    #[arg(long)]
    cf: Option<f64>,
    /// Ensemble weight of the direct question (requires --cf and --cp).
    #[arg(long)]
    cd: Option<f64>,
    /// Ensemble weight of the sampling-support score (requires --cf and --cd).
    #[arg(long)]
    cp: Option<f64>,
    /// Chat-completions endpoint base URL.
    #[arg(long)]
    backend_url: Option<String>,
    /// Model identifier.
    #[arg(long)]
    model: Option<String>,
    /// Deterministic-sampling seed.
    #[arg(long)]
    seed: Option<i64>,
    /// Serve completions from this transcript store only (no network).
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Record every completion into this transcript store.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Concurrent backend requests.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Baseline role for the prefix-wins analysis.
    #[arg(long)]
    baseline: Option<String>,
    /// Comma-separated passage ids to restrict the run to.
    #[arg(long)]
    passages: Option<String>,
    /// Environment variable holding the bearer credential.
    #[arg(long)]
    credential_env: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Directory of score files (default: <out>/scores).
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Comma-separated tasks: nonfact, nonfact*, factual.
    #[arg(long)]
    tasks: Option<String>,
    /// Also compute the prefix-wins table against the baseline.
    #[arg(long)]
    prefix_analysis: bool,
    /// Use the trapezoidal PR area instead of average precision.
    #[arg(long)]
    pr_trapezoid: bool,
}

impl RunArgs {
    /// Resolves the options file (when given) overlaid with these flags.
    fn resolve(self) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let overrides = FileConfig {
            dataset: self.dataset,
            out: self.out,
            methods: self.methods,
            samples_source: self.samples_source,
            n: self.n,
            theta: self.theta,
            cf: self.cf,
            cd: self.cd,
            cp: self.cp,
            backend_url: self.backend_url,
            model: self.model,
            seed: self.seed,
            replay: self.replay,
            record: self.record,
            parallelism: self.parallelism,
            baseline: self.baseline,
            credential_env: self.credential_env,
            passages: self.passages,
        };
        RunConfig::resolve(base.merged(overrides))
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Ingest(args) => {
            let summary = cmd_ingest(&args.input, &args.output, args.keep_excluded)?;
            println!("{}", render_ingest_summary(&summary, &args.output));
            Ok(EXIT_OK)
        }
        Command::Resample(args) => {
            let cfg = args.resolve()?;
            let report = cmd_resample(&cfg)?;
            print_pass_report("resampled", &report);
            Ok(report.exit_code())
        }
        Command::Detect(args) => {
            let cfg = args.resolve()?;
            let report = cmd_detect(&cfg)?;
            print_pass_report("scored", &report);
            Ok(report.exit_code())
        }
        Command::Evaluate(args) => {
            let opts = EvaluateOptions {
                scores_dir: args.scores,
                tasks: match &args.tasks {
                    Some(csv) => parse_tasks(csv)?,
                    None => Task::ALL.to_vec(),
                },
                prefix_analysis: args.prefix_analysis,
                trapezoid_pr: args.pr_trapezoid,
            };
            let cfg = args.run.resolve()?;
            let report = cmd_evaluate(&cfg, &opts)?;
            print!("{}", report.rendered);
            Ok(EXIT_OK)
        }
    }
}

fn print_pass_report(verb: &str, report: &PassReport) {
    println!(
        "{verb} {} passage(s); {} already current; {} failed",
        report.done.len(),
        report.skipped.len(),
        report.failed.len()
    );
    for (id, e) in &report.failed {
        eprintln!("passage {id}: {e}");
    }
}
