use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mmoe_cli::{commands, config, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mmoe", version, about = "Streaming mixture-of-experts experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded datasets with their true parameters.
    Simulate(RunArgs),
    /// Fit the configured estimator and write one report per seed.
    Fit(RunArgs),
    /// Compare MM with the gradient baselines.
    Benchmark(RunArgs),
    /// Export fit reports as long-format CSVs.
    Report {
        /// Fit report files or directories containing them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Print the config schema, or write it to a file.
    Schema {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(args: &RunArgs) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &args.config {
        Some(path) => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_json_slice(&bytes).with_context(|| format!("loading {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(
    args: &RunArgs,
    cmd: fn(&ExperimentConfig, &Path) -> mmoe_cli::Result<Vec<PathBuf>>,
) -> anyhow::Result<()> {
    let (cfg, out) = load(args)?;
    print_paths(&cmd(&cfg, &out)?);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => run(&args, commands::cmd_simulate),
        Command::Fit(args) => run(&args, commands::cmd_fit),
        Command::Benchmark(args) => run(&args, commands::cmd_benchmark),
        Command::Report { inputs, out } => {
            print_paths(&commands::cmd_report(&inputs, &out)?);
            Ok(())
        }
        Command::Schema { out } => {
            let text = serde_json::to_string_pretty(&config::schema())? + "\n";
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}
