//! `qoc`: design, sweep, evaluate and propagate optimal control pulses for
//! a dissipative two-level system. See `qoc --help` and the crate README
//! for the file formats.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qoc_cli::{
    apply_tolerance, default_out_root, exit_code_for, execute_evaluate, execute_list,
    execute_propagate, execute_run, load_scenario, parse_functional, parse_tolerance, RunConfig,
};
use qoc_core::experiments::Scenario;
use qoc_core::Result;

#[derive(Parser)]
#[command(
    name = "qoc",
    version,
    about = "Optimal-pulse design for a driven, dissipative two-level system"
)]
struct Cli {
    /// Output directory (default: $QOC_DEFAULT_OUT/<scenario> or qoc-out/<scenario>)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweep points (default: one per CPU)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Overwrite a directory that already holds a completed manifest
    #[arg(long, global = true)]
    force: bool,

    /// Convergence-criterion override, e.g. --tolerance delta0_tol=1e-3
    /// (names: gain_tol, delta0_tol, delta1_tol, final_fluence_tol,
    /// required_streak); may be repeated
    #[arg(long = "tolerance", value_name = "NAME=VALUE", global = true)]
    tolerances: Vec<String>,

    /// Reserved for future stochastic features; accepted and ignored
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SourceArgs {
    /// Builtin scenario name (see list-scenarios)
    #[arg(long)]
    scenario: Option<String>,

    /// JSON scenario file (see the README for the schema)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario: optimize every sweep point and write artifacts
    Run(SourceArgs),
    /// Like run, but requires the scenario to sweep at least one axis
    Sweep(SourceArgs),
    /// Score a stored field under a functional without optimizing
    Evaluate {
        #[command(flatten)]
        source: SourceArgs,
        /// Field file (pulse.csv format) or the literal `zero`
        #[arg(long)]
        field: String,
        /// Override the tracking functional: type1 or type2
        #[arg(long)]
        functional: Option<String>,
        /// Penalty amplitude used for the penalty/objective bookkeeping
        #[arg(long, default_value_t = 1.0)]
        a0: f64,
    },
    /// Integrate a stored field and write the trajectory tables
    Propagate {
        #[command(flatten)]
        source: SourceArgs,
        /// Field file (pulse.csv format) or the literal `zero`
        #[arg(long)]
        field: String,
    },
    /// List the builtin scenarios
    ListScenarios,
}

fn scenario_with_overrides(cli: &Cli, source: &SourceArgs, default: Option<&str>) -> Result<Scenario> {
    let mut scenario = load_scenario(
        source.scenario.as_deref(),
        source.config.as_deref(),
        default,
    )?;
    for spec in &cli.tolerances {
        let (name, value) = parse_tolerance(spec)?;
        apply_tolerance(&mut scenario.optimizer.thresholds, &name, value)?;
    }
    Ok(scenario)
}

fn out_dir_for(cli: &Cli, scenario: &Scenario, suffix: Option<&str>) -> PathBuf {
    match &cli.out {
        Some(dir) => dir.clone(),
        None => {
            let leaf = match suffix {
                Some(sfx) => format!("{}-{sfx}", scenario.name),
                None => scenario.name.clone(),
            };
            default_out_root().join(leaf)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run(source) | Command::Sweep(source) => {
            let scenario = scenario_with_overrides(cli, source, None)?;
            if matches!(cli.command, Command::Sweep(_)) && scenario.sweep.is_empty() {
                return Err(qoc_core::Error::Config(format!(
                    "sweep: scenario '{}' defines no sweep axes (use run instead)",
                    scenario.name
                )));
            }
            let out_dir = out_dir_for(cli, &scenario, None);
            let config = RunConfig {
                scenario,
                out_dir,
                jobs: cli.jobs,
                force: cli.force,
                seed: cli.seed,
            };
            let failed = execute_run(&config)?;
            if failed > 0 {
                eprintln!("{failed} sweep point(s) failed");
                Ok(ExitCode::from(1))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Evaluate {
            source,
            field,
            functional,
            a0,
        } => {
            let scenario = scenario_with_overrides(cli, source, Some("fig1"))?;
            let functional = functional.as_deref().map(parse_functional).transpose()?;
            execute_evaluate(&scenario, field, functional, *a0)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Propagate { source, field } => {
            let scenario = scenario_with_overrides(cli, source, Some("fig1"))?;
            let out_dir = out_dir_for(cli, &scenario, Some("propagate"));
            execute_propagate(&scenario, field, &out_dir, cli.force)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ListScenarios => {
            execute_list();
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
