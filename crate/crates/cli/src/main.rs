use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vimech_cli::commands::{check, generate, identify_cmd, simulate_cmd};
use vimech_cli::RunOptions;

#[derive(Parser)]
#[command(name = "vimech", version, about = "Variational integrator simulation and stiffness identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate at rho_true and write measurement files.
    Generate(Common),
    /// Simulate and write trajectory, energy and constraint residuals.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write per-step A_k and B_k to linearization.json.
        #[arg(long)]
        dump_linearization: bool,
    },
    /// Finite-difference checks of every analytic derivative.
    Check(Common),
    /// Estimate the parameters from measured data.
    Identify(Common),
}

fn options(c: Common, dump_linearization: bool) -> RunOptions {
    RunOptions {
        config: c.config,
        out: c.out,
        seed: c.seed,
        dump_linearization,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let text: Vec<&str> = msg.lines().map(str::trim).take_while(|l| !l.is_empty()).collect();
            eprintln!("error code=2 kind=usage: {}", text.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Generate(c) => generate(&options(c, false)),
        Command::Simulate { common, dump_linearization } => simulate_cmd(&options(common, dump_linearization)),
        Command::Check(c) => check(&options(c, false)),
        Command::Identify(c) => identify_cmd(&options(c, false)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
