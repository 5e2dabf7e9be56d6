use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cnce::cli::{self, Command, ExperimentConfig};
use cnce::{Error, Result};

#[derive(Parser)]
#[command(name = "cnce", version, about = "Conditional NCE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// NCE and CNCE estimates on the Gaussian toy benchmark.
    ToyMi(Common),
    /// Monte Carlo bias and variance of marginal and ring negatives.
    BiasVar(Common),
    /// Bottom-slice proposals that overshoot the true mutual information.
    Counterexample(Common),
    /// Instance discrimination on synthetic clusters.
    Instdisc(Common),
    /// Branch a baseline run at fixed hardness levels.
    PhaseStudy(Common),
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; results land in `<out>/<command>/<config-hash>/`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for independent seeds; defaults to all cores.
    #[arg(long)]
    parallel: Option<usize>,
}

fn execute(command: Command, args: &Common) -> Result<PathBuf> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path)?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::parse(command, &text)?;
    if let Some(seed) = args.seed {
        cfg.set("run.seed", &seed.to_string())?;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.parallel {
        if n == 0 {
            return Err(Error::Config("--parallel must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| cli::run(&cfg, &args.out))
}

fn main() -> ExitCode {
    let (command, args) = match Cli::parse().command {
        Sub::ToyMi(a) => (Command::ToyMi, a),
        Sub::BiasVar(a) => (Command::BiasVar, a),
        Sub::Counterexample(a) => (Command::Counterexample, a),
        Sub::Instdisc(a) => (Command::Instdisc, a),
        Sub::PhaseStudy(a) => (Command::PhaseStudy, a),
    };
    match execute(command, &args) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "command": command.name(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
