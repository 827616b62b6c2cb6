use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use nlstree::cli::{error_exit_code, error_report, run, DirOverrides, RunConfig, Subcommand};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    /// Trees and their counts.
    Enumerate,
    /// Tree coefficient tables and bound checks.
    Coeffs,
    /// Series solution and residuals.
    Solve,
    /// Series against the Galerkin oracle.
    Compare,
    /// Frozen partition, l1 identity, divisors, smoothing and limit checks.
    Diagnose,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Enumerate => Subcommand::Enumerate,
            Command::Coeffs => Subcommand::Coeffs,
            Command::Solve => Subcommand::Solve,
            Command::Compare => Subcommand::Compare,
            Command::Diagnose => Subcommand::Diagnose,
        }
    }
}

/// Tree-expansion solver for the modified periodic cubic NLS.
#[derive(Debug, Parser)]
#[command(name = "nlstree", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config and NLSTREE_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cache directory (overrides the config and NLSTREE_CACHE_DIR).
    #[arg(long)]
    cache: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = RunConfig::load(&args.config).and_then(|mut cfg| {
        DirOverrides {
            out: args.out,
            cache: args.cache,
        }
        .with_env()
        .apply(&mut cfg);
        run(args.command.into(), &cfg).map(|o| (o, cfg))
    });
    match result {
        Ok((outcome, cfg)) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for c in &outcome.checks {
                println!("{} {} value={} threshold={}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
            }
            println!("wrote {} files to {}", outcome.files.len() + 1, cfg.paths.out_dir.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprint!("{}", error_report(&e));
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
