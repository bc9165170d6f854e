use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use linetension::harness::{self, Command, Fault, GeometryFormat, RunConfig};

#[derive(Parser)]
#[command(name = "linetension", version, about = "Line-measure approximation and line-tension energy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Geometry export format.
    #[arg(long, default_value = "obj")]
    format: GeometryFormat,
}

#[derive(Subcommand)]
enum Cmd {
    /// Builds the approximating measures for every k.
    Approximate(RunArgs),
    /// Upper-bound energy experiment over k, sigma and eps.
    Energy(RunArgs),
    /// Convex-envelope values and certificates per tetrahedron.
    Envelope(RunArgs),
    /// Runs the invariant suite; exits nonzero on any failure.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Injects a defect: normal-jump or ledger-imbalance.
        #[arg(long)]
        inject: Option<Fault>,
    },
    /// Checks a run directory against its manifest and prints its summaries.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    Ok(cfg)
}

fn run(command: Command, a: RunArgs) -> Result<ExitCode> {
    let cfg = load(&a.config, a.seed, a.out)?;
    let manifest = harness::run(&cfg, command, a.format).with_context(|| format!("{} failed", command.name()))?;
    for art in &manifest.artifacts {
        println!("{}  {}", art.sha256, cfg.out_dir.join(&art.path).display());
    }
    println!("config {}", manifest.config_hash);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Approximate(a) => run(Command::Approximate, a),
        Cmd::Energy(a) => run(Command::Energy, a),
        Cmd::Envelope(a) => run(Command::Envelope, a),
        Cmd::Verify { config, seed, inject } => load(&config, seed, None).and_then(|cfg| {
            let rep = harness::verify(&cfg, inject)?;
            print!("{}", rep.to_text());
            Ok(if rep.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }),
        Cmd::Report { out } => harness::report(&out).map_err(Into::into).map(|s| {
            print!("{s}");
            ExitCode::SUCCESS
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
