//! `gmls`: estimation, diagnostics, fixed-effects panels and Monte Carlo
//! checks for the general Gauss-Markoff model from the command line.

mod commands;
mod io;
mod report;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gmls_core::Tolerance;

use commands::{DiagnoseArgs, EstimateArgs, PanelArgs, SimulateArgs};
use report::{OutputFormat, EXIT_INPUT};

#[derive(Debug, Parser)]
#[command(name = "gmls", version, about = "Least squares for the general Gauss-Markoff model")]
struct Cli {
    /// Absolute rank tolerance replacing the default relative rule.
    #[arg(long, global = true, env = "GMLS_TOL")]
    tol: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Human)]
    output: OutputFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one estimator after checking its identification conditions.
    Estimate(EstimateArgs),
    /// Report every rank and consistency condition with witnesses.
    Diagnose(DiagnoseArgs),
    /// Fixed-effects panel: dummy-variable GLS, within MLS and drop-period.
    Panel(PanelArgs),
    /// Monte Carlo verification of unbiasedness and covariance.
    Simulate(SimulateArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    let tol = match cli.tol {
        None => Tolerance::Default,
        Some(t) if t.is_finite() && t >= 0.0 => Tolerance::Absolute(t),
        Some(t) => {
            eprintln!("error: --tol must be a nonnegative finite number, got {t}");
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    let doc = match &cli.command {
        Command::Estimate(a) => commands::estimate(a, tol),
        Command::Diagnose(a) => commands::diagnose(a, tol),
        Command::Panel(a) => commands::panel(a, tol),
        Command::Simulate(a) => commands::simulate(a, tol),
    };
    let mut stdout = std::io::stdout().lock();
    if stdout.write_all(doc.render(cli.output).as_bytes()).and_then(|_| stdout.flush()).is_err() {
        return ExitCode::from(EXIT_INPUT as u8);
    }
    if let Some(e) = &doc.error {
        eprintln!("error [{}]: {}", e.code, e.message);
    }
    ExitCode::from(doc.exit_status as u8)
}
