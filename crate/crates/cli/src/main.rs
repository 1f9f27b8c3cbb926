use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use metareduce::config::RunConfig;
use metareduce::error::Error;
use metareduce::pipeline::{run_command, Context, Outcome};
use serde_json::json;

const CACHE_ENV: &str = "METAREDUCE_CACHE";

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Analyze,
    Spectrum,
    Qsd,
    Quasipotential,
    Reduce,
    Simulate,
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Spectrum => "spectrum",
            Command::Qsd => "qsd",
            Command::Quasipotential => "quasipotential",
            Command::Reduce => "reduce",
            Command::Simulate => "simulate",
            Command::Validate => "validate",
        }
    }
}

/// Reduce a metastable randomly perturbed map to a finite Markov chain.
///
/// Exit codes: 0 pass, 1 check failure, 2 configuration error, 3 numeric error.
#[derive(Debug, Parser)]
#[command(name = "metareduce", version)]
struct Cli {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Number of random streams and worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(dir) = std::env::var_os(CACHE_ENV) {
        cfg.cache_dir = PathBuf::from(dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let cfg = load(cli)?;
    rayon_threads(cfg.workers);
    run_command(cli.command.name(), &Context::new(cfg))
}

fn rayon_threads(workers: usize) {
    // The stream split, not the pool size, fixes the results.
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
    {
        log::debug!("thread pool already set: {e}");
    }
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({"error": kind, "message": message}));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("Config", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome).expect("outcome serializes")
            );
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 3,
            })
        }
    }
}
