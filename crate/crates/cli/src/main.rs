use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use magtrans_cli::config::{RunConfig, Study};
use magtrans_cli::output::write_report;
use magtrans_cli::studies::run;
use magtrans_cli::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "magtrans",
    version,
    about = "Driven Landau-level propagator: verification and studies"
)]
struct Args {
    #[arg(value_enum)]
    study: Study,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config entry, e.g. `--set integrator.dt=0.005`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn execute(args: &Args) -> Result<bool, CliError> {
    let mut overrides = args.set.clone();
    overrides.push(format!("study=\"{}\"", args.study.name()));
    let cfg = RunConfig::load(&args.config, &overrides)?;
    let start = Instant::now();
    let report = run(&cfg, args.study)?;
    let dir = write_report(&cfg, &report, args.out.as_deref())?;
    for c in report.failures() {
        eprintln!(
            "check failed: {} residual {:e} > tolerance {:e}",
            c.name, c.residual, c.tolerance
        );
    }
    println!(
        "{}: {} ({} checks, {:.1?}) -> {}",
        args.study.name(),
        if report.passed() { "pass" } else { "FAIL" },
        report.checks.len(),
        start.elapsed(),
        dir.display()
    );
    Ok(report.passed())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
