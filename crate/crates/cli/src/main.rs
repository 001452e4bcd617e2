use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rebalancing::Error;
use rebalancing_cli::{commands, Overrides, RunConfig};

/// Optimal time-based rebalancing under small proportional transaction costs.
#[derive(Parser)]
#[command(name = "rebalance", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal waiting time and cost integrands at the initial state.
    Frequency(ConfigArgs),
    /// Leading-order total cost of the optimal and optimal constant rules.
    Tc(ConfigArgs),
    /// Monte Carlo objectives of the configured strategies.
    Simulate(SimulateArgs),
    /// Reproduce one of the benchmark tables.
    Table(TableArgs),
    /// Waiting time and objective across correlations.
    Figure(FigureArgs),
    /// Model and assumption diagnostics.
    Validate(ConfigArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            paths: self.paths,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    inner: ConfigArgs,
    /// Per-path outcomes as CSV.
    #[arg(long)]
    per_path: Option<PathBuf>,
    /// Trade ledger of every path as CSV.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    table: u8,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(long)]
    figure: u8,
    #[command(flatten)]
    common: Common,
}

fn load(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(&args.config)?;
    args.common.overrides().apply(&mut cfg);
    Ok(cfg)
}

fn write(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Error::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let (report, out) = match cli.command {
        Command::Frequency(a) => (commands::frequency(&load(&a)?)?, a.common.out),
        Command::Tc(a) => (commands::tc(&load(&a)?)?, a.common.out),
        Command::Validate(a) => (commands::validate(&load(&a)?)?, a.common.out),
        Command::Simulate(a) => {
            let cfg = load(&a.inner)?;
            let per_path = a.per_path.or_else(|| cfg.output.per_path.clone());
            let (report, paths) = commands::simulate(&cfg, per_path.is_some())?;
            if let (Some(p), Some(text)) = (&per_path, paths) {
                write(Some(p), &text)?;
            }
            if let Some(p) = &a.ledger {
                write(Some(p), &commands::ledger(&cfg)?)?;
            }
            (report, a.inner.common.out.or_else(|| cfg.output.path.clone()))
        }
        Command::Table(a) => (commands::table(a.table, &a.common.overrides())?, a.common.out),
        Command::Figure(a) => (commands::figure(a.figure, &a.common.overrides())?, a.common.out),
    };
    write(out.as_deref(), &report.csv)?;
    Ok(report.complete)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some simulated paths failed (wealth reached zero)");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
