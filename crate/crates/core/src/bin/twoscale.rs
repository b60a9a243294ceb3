use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twoscale::experiment::{exit_code, list_builtins, run, Command, ExperimentConfig};

/// Periodic homogenization experiments driven by JSON configs.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Cell-problem table and f_hom estimate.
    Cell(RunArgs),
    /// Minimizers of F_eps with affine boundary data.
    Epsilon(RunArgs),
    /// Estimate a two-scale Young measure from a generated sequence.
    Ym(RunArgs),
    /// Check the characterization conditions on a measure.
    Check(RunArgs),
    /// Compare min F_eps, f_hom and candidate measures.
    Gamma(RunArgs),
    /// Regenerate the analytic example measures and their reports.
    Examples(RunArgs),
    /// Print the catalog of built-in integrands, generators and dictionaries.
    List,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let (command, args) = match cli.command {
        Cmd::List => {
            println!(
                "{}",
                serde_json::to_string_pretty(&list_builtins()).expect("catalog serializes")
            );
            return ExitCode::SUCCESS;
        }
        Cmd::Cell(a) => (Command::Cell, a),
        Cmd::Epsilon(a) => (Command::Epsilon, a),
        Cmd::Ym(a) => (Command::Ym, a),
        Cmd::Check(a) => (Command::Check, a),
        Cmd::Gamma(a) => (Command::Gamma, a),
        Cmd::Examples(a) => (Command::Examples, a),
    };
    let config = match &args.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    };
    let mut config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    config.command = Some(command);
    if let Some(out) = args.out {
        config.output = out;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    match run(&config) {
        Ok(summary) => {
            println!("{}", summary.message.trim_end());
            println!(
                "artifacts: {} ({})",
                summary.output.display(),
                summary.files.join(", ")
            );
            if summary.passed == Some(false) {
                println!("verdict: FAIL");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
