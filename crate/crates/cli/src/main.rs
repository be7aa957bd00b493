use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use saddlemix_cli::config::resolve;
use saddlemix_cli::{bounds, chain, figure1, gtd, plot, CliResult, Overrides};

#[derive(Parser)]
#[command(name = "saddlemix", version, about = "Stochastic saddle-point experiments under Markov sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config (JSON if the extension is .json); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Horizon 1000 and at most two seeds
    #[arg(long)]
    smoke: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulation study: gap curves per schedule, regime and replay flag
    Figure1(Common),
    /// GTD and GTD2 runs on the configured MDP
    Gtd(Common),
    /// Bound table over a horizon grid
    Bounds(Common),
    /// Build and verify one tuned chain
    Chain(Common),
    /// Re-render panels from a summary CSV
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let load = |c: &Common| {
        let overrides = Overrides { seed: c.seed, out: c.out.clone(), smoke: c.smoke };
        resolve(c.config.as_deref(), &overrides)
    };
    match cli.command {
        Command::Figure1(c) => figure1::cmd_figure1(&load(&c)?).map(drop),
        Command::Gtd(c) => gtd::cmd_gtd(&load(&c)?).map(drop),
        Command::Bounds(c) => bounds::cmd_bounds(&load(&c)?).map(drop),
        Command::Chain(c) => chain::cmd_chain(&load(&c)?).map(drop),
        Command::Plot { csv, out } => {
            for p in plot::render_csv(&csv, &out)? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
