use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use layered_ocp::bench::{
    run_experiment, verify_suite, AdmmOverrides, Check, Experiment, ExperimentConfig, ExperimentReport, Solver,
};
use layered_ocp::Error;

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "layered-ocp", version, about = "Layered ADMM optimal-control benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded benchmark batch.
    Run(RunArgs),
    /// Run the oracle-equivalence suite.
    Verify,
    /// List experiment names.
    List,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment name, e.g. cartpole or unicycle-corridor.
    experiment: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// JSON file, or a directory for CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Initial penalty ρ₀.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Bound on the squared primal residual.
    #[arg(long)]
    eps_primal: Option<f64>,
    /// JSON config; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    experiment: Option<String>,
    trials: Option<usize>,
    seed: Option<u64>,
    horizon: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
    admm: AdmmOverrides,
}

struct Plan {
    config: ExperimentConfig,
    out: Option<PathBuf>,
    format: Format,
}

fn load_config(path: &Path) -> Result<FileConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
}

fn plan(args: RunArgs) -> Result<Plan, Error> {
    let file = match &args.config {
        Some(p) => load_config(p)?,
        None => FileConfig::default(),
    };
    let name = args
        .experiment
        .or(file.experiment)
        .ok_or_else(|| Error::Usage("an experiment name is required".into()))?;
    let experiment: Experiment = name.parse()?;
    let default_trials = if experiment.is_linear() { 1 } else { 20 };
    let trials = args.trials.or(file.trials).unwrap_or(default_trials);
    if trials == 0 {
        return Err(Error::Usage("--trials must be at least 1".into()));
    }
    if args.horizon.or(file.horizon) == Some(0) {
        return Err(Error::Usage("--horizon must be at least 1".into()));
    }
    let flags = AdmmOverrides {
        rho0: args.rho,
        max_outer: args.max_outer,
        eps_primal: args.eps_primal,
        ..AdmmOverrides::default()
    };
    let mut config = ExperimentConfig::new(experiment, trials, args.seed.or(file.seed).unwrap_or(0));
    config.horizon = args.horizon.or(file.horizon);
    config.admm = file.admm.merged(flags);
    config.admm_config().validate().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(Plan {
        config,
        out: args.out.or(file.out),
        format: args.format.or(file.format).unwrap_or(Format::Json),
    })
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        println!("{mark}  {:<24} {}", c.name, c.detail);
    }
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{}: {} trials, horizon {}, seed {}",
        report.experiment,
        report.records.len() / 2,
        report.horizon,
        report.seed
    );
    for solver in [Solver::Admm, Solver::Ilqr] {
        if let Some(a) = report.aggregate(solver) {
            let name = match solver {
                Solver::Admm => "admm",
                Solver::Ilqr => "ilqr",
            };
            println!(
                "  {name:<5} success {:>5.1}%  iterations {:.1} ± {:.1}",
                a.success_rate, a.iterations_mean, a.iterations_std
            );
        }
    }
    print_checks(&report.checks);
}

fn run(args: RunArgs) -> Result<bool, Error> {
    let plan = plan(args)?;
    let report = run_experiment(&plan.config)?;
    print_summary(&report);
    if let Some(out) = &plan.out {
        match plan.format {
            Format::Json => report.write_json(out)?,
            Format::Csv => report.write_csv(out)?,
        }
        println!("wrote {}", out.display());
    }
    Ok(report.passed())
}

fn exit_for(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        Error::Usage(_) | Error::InvalidArgument(_) => ExitCode::from(EXIT_USAGE),
        _ => ExitCode::from(EXIT_FAILED),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Verify => verify_suite().map(|checks| {
            print_checks(&checks);
            checks.iter().all(|c| c.passed)
        }),
        Command::List => {
            for e in Experiment::ALL {
                println!("{e}");
            }
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(e) => exit_for(&e),
    }
}
