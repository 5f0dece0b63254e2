//! Command-line plumbing for the pulse-design toolkit.
//!
//! The `qoc` binary wraps the core library: it loads a scenario from the
//! builtin registry or a JSON config file, applies command-line tolerance
//! overrides, executes every sweep point on a bounded worker pool, and
//! writes the CSV + JSON-manifest artifact tree. `evaluate` scores a stored
//! field under a chosen functional without optimizing; `propagate`
//! integrates a stored field and writes the trajectory tables.
//!
//! Exit codes: 0 on success, 1 when at least one sweep point failed (or a
//! runtime/IO failure occurred), 2 on configuration errors.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use qoc_core::dynamics::{propagate_density, ControlField, DensityState};
use qoc_core::experiments::{
    builtin, builtin_names, cross_evaluate, full_precision, read_field_csv, run_scenario,
    write_outputs, ArtifactWriter, FileEntry, Scenario, ScenarioResult,
};
use qoc_core::objectives::{purity, purity_rate, TargetKind};
use qoc_core::optimizer::{ControlProblem, Thresholds};
use qoc_core::{Error, Result};

/// Everything one invocation needs besides the subcommand itself.
pub struct RunConfig {
    pub scenario: Scenario,
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
    pub force: bool,
    /// Reserved: all current algorithms are deterministic. Recorded so
    /// configs stay forward-compatible with stochastic features.
    pub seed: Option<u64>,
}

/// Maps an error to the process exit code: configuration problems exit 2,
/// runtime failures exit 1.
pub fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::OutputExists(_) | Error::FieldFile(_) => 2,
        _ => 1,
    }
}

/// Parses a scenario config: either a full scenario object or
/// `{"builtin": "<name>"}` to pull one from the registry.
pub fn parse_config(text: &str) -> Result<Scenario> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
    if let Some(obj) = value.as_object() {
        if let Some(name) = obj.get("builtin") {
            if obj.len() != 1 {
                return Err(Error::Config(
                    "builtin: must be the only key when referencing a builtin scenario".into(),
                ));
            }
            let name = name.as_str().ok_or_else(|| {
                Error::Config("builtin: expected a scenario name string".into())
            })?;
            return builtin(name).ok_or_else(|| {
                Error::Config(format!(
                    "builtin: unknown scenario '{name}' (see list-scenarios)"
                ))
            });
        }
    }
    let scenario: Scenario = serde_json::from_value(value)
        .map_err(|e| Error::Config(format!("config: {e}")))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Loads the scenario selected by `--scenario` (builtin name) or `--config`
/// (JSON file). Exactly one must be given unless `default_builtin` applies.
pub fn load_scenario(
    scenario: Option<&str>,
    config: Option<&Path>,
    default_builtin: Option<&str>,
) -> Result<Scenario> {
    match (scenario, config) {
        (Some(_), Some(_)) => Err(Error::Config(
            "give either --scenario or --config, not both".into(),
        )),
        (Some(name), None) => builtin(name).ok_or_else(|| {
            Error::Config(format!(
                "--scenario: unknown scenario '{name}' (see list-scenarios)"
            ))
        }),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("--config {}: {e}", path.display()))
            })?;
            parse_config(&text)
        }
        (None, None) => match default_builtin {
            Some(name) => Ok(builtin(name).expect("default builtin exists")),
            None => Err(Error::Config(
                "select a scenario with --scenario <name> or --config <file>".into(),
            )),
        },
    }
}

/// Parses one `--tolerance name=value` argument.
pub fn parse_tolerance(spec: &str) -> Result<(String, f64)> {
    let (name, value) = spec.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "--tolerance: expected name=value, got '{spec}'"
        ))
    })?;
    let value: f64 = value.trim().parse().map_err(|_| {
        Error::Config(format!("--tolerance {name}: '{value}' is not a number"))
    })?;
    Ok((name.trim().to_string(), value))
}

/// Applies a named tolerance override to the convergence thresholds.
pub fn apply_tolerance(thresholds: &mut Thresholds, name: &str, value: f64) -> Result<()> {
    match name {
        "gain_tol" => thresholds.gain_tol = value,
        "delta0_tol" => thresholds.delta0_tol = value,
        "delta1_tol" => thresholds.delta1_tol = value,
        "final_fluence_tol" => thresholds.final_fluence_tol = value,
        "required_streak" => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!(
                    "--tolerance required_streak: expected a positive integer, got {value}"
                )));
            }
            thresholds.required_streak = value as u32;
        }
        other => {
            return Err(Error::Config(format!(
                "--tolerance: unknown criterion '{other}' (expected gain_tol, delta0_tol, \
                 delta1_tol, final_fluence_tol, or required_streak)"
            )))
        }
    }
    thresholds.validate().map_err(Error::Config)
}

/// Output root when `--out` is absent: `$QOC_DEFAULT_OUT` or `qoc-out`.
pub fn default_out_root() -> PathBuf {
    std::env::var_os("QOC_DEFAULT_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("qoc-out"))
}

/// Installs the global worker pool bound. Must run before any parallel work.
pub fn configure_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    Ok(())
}

fn print_outcomes(result: &ScenarioResult) {
    for outcome in &result.outcomes {
        match (&outcome.run, &outcome.error) {
            (Some(run), None) => {
                let rec = run.last_record();
                println!(
                    "{}: {} after {} iterations, functional {:.6}, fluence {:.6}",
                    outcome.point.label,
                    run.termination.name(),
                    rec.k,
                    run.report.functional,
                    run.report.fluence
                );
            }
            (Some(run), Some(err)) => {
                println!(
                    "{}: {} but post-processing failed: {err}",
                    outcome.point.label,
                    run.termination.name()
                );
            }
            (None, err) => {
                println!(
                    "{}: FAILED - {}",
                    outcome.point.label,
                    err.as_deref().unwrap_or("unknown error")
                );
            }
        }
    }
}

/// Executes a scenario and writes its artifacts. Returns the number of
/// failed sweep points (0 means exit code 0).
pub fn execute_run(config: &RunConfig) -> Result<usize> {
    configure_jobs(config.jobs)?;
    let result = run_scenario(&config.scenario)?;
    let manifest = write_outputs(&result, &config.out_dir, config.force)?;
    print_outcomes(&result);
    println!(
        "wrote {} ({} files)",
        config.out_dir.join("manifest.json").display(),
        manifest.files.len() + 1
    );
    Ok(result.outcomes.iter().filter(|o| o.is_failure()).count())
}

/// Resolves `--field`: a CSV path, or the literal `zero` for a null field on
/// the scenario's own grid.
pub fn load_field(spec: &str, scenario: &Scenario) -> Result<ControlField> {
    if spec == "zero" {
        return Ok(ControlField::zeros(scenario.system.frame, &scenario.grid));
    }
    let (grid, field) = read_field_csv(Path::new(spec))?;
    if grid != scenario.grid {
        return Err(Error::FieldFile(format!(
            "{spec}: field grid (t_final {}, {} steps) does not match the scenario grid \
             (t_final {}, {} steps)",
            grid.t_final, grid.n_steps, scenario.grid.t_final, scenario.grid.n_steps
        )));
    }
    Ok(field)
}

/// The scenario's base problem, ignoring sweep axes.
pub fn base_problem(scenario: &Scenario) -> Result<ControlProblem> {
    let problem = ControlProblem {
        system: scenario.system,
        grid: scenario.grid,
        target: scenario.target,
        window: scenario.window.clone(),
        ramp_width: scenario.ramp_width,
    };
    problem.validate()?;
    Ok(problem)
}

/// Scores a stored field under the scenario's problem (optionally with the
/// other tracking functional) and prints the report.
pub fn execute_evaluate(
    scenario: &Scenario,
    field_spec: &str,
    functional: Option<TargetKind>,
    a0: f64,
) -> Result<()> {
    if !a0.is_finite() || a0 <= 0.0 {
        return Err(Error::Config(format!(
            "--a0 must be finite and > 0, got {a0}"
        )));
    }
    let mut problem = base_problem(scenario)?;
    if let Some(kind) = functional {
        problem.target.kind = kind;
    }
    let field = load_field(field_spec, scenario)?;
    let report = cross_evaluate(&problem, a0, &field)?;
    println!("target        = {}", problem.target.kind.name());
    println!("functional    = {}", full_precision(report.functional));
    println!("penalty       = {}", full_precision(report.penalty));
    println!("objective     = {}", full_precision(report.objective));
    println!("fluence       = {}", full_precision(report.fluence));
    println!("plain_fluence = {}", full_precision(report.fluence_plain));
    println!("ideal         = {}", full_precision(report.ideal));
    Ok(())
}

/// Manifest written by `propagate`: same inventory discipline as scenario
/// runs, plus the field source.
#[derive(Serialize)]
struct PropagateManifest {
    format_version: u32,
    generator: String,
    command: &'static str,
    field_source: String,
    scenario: Scenario,
    final_rho00: f64,
    final_rho11: f64,
    final_purity: f64,
    files: Vec<FileEntry>,
}

/// Integrates a stored field (no optimization) and writes the trajectory
/// tables plus a manifest into `out_dir`.
pub fn execute_propagate(
    scenario: &Scenario,
    field_spec: &str,
    out_dir: &Path,
    force: bool,
) -> Result<()> {
    let problem = base_problem(scenario)?;
    let field = load_field(field_spec, scenario)?;
    let manifest_path = out_dir.join("manifest.json");
    if manifest_path.exists() && !force {
        return Err(Error::OutputExists(format!(
            "{} already contains a completed run (use --force to overwrite)",
            out_dir.display()
        )));
    }
    let traj = propagate_density(
        &problem.system,
        &problem.grid,
        &field,
        DensityState::ground(),
    )?;

    let grid = &problem.grid;
    let mut writer = ArtifactWriter::new(out_dir);
    let rows: Vec<Vec<String>> = (0..grid.n_points())
        .map(|j| {
            let s = &traj.states[j];
            vec![
                full_precision(grid.time(j)),
                full_precision(s.rho00),
                full_precision(s.rho11),
                full_precision(s.rho01.re),
                full_precision(s.rho01.im),
            ]
        })
        .collect();
    writer.emit_csv(
        "populations.csv",
        &["time", "rho00", "rho11", "re_rho01", "im_rho01"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = (0..grid.n_points())
        .map(|j| {
            let s = &traj.states[j];
            vec![
                full_precision(grid.time(j)),
                full_precision(purity(s)),
                full_precision(purity_rate(&problem.system, s)),
            ]
        })
        .collect();
    writer.emit_csv("purity.csv", &["time", "purity", "purity_rate"], &rows)?;
    let rows: Vec<Vec<String>> = (0..grid.n_points())
        .map(|j| {
            let [sx, sy, sz] = qoc_core::dynamics::bloch_vector(&traj.states[j]);
            vec![
                full_precision(grid.time(j)),
                full_precision(sx),
                full_precision(sy),
                full_precision(sz),
            ]
        })
        .collect();
    writer.emit_csv("bloch.csv", &["time", "sx", "sy", "sz"], &rows)?;

    let last = traj.states.last().expect("trajectory is never empty");
    let manifest = PropagateManifest {
        format_version: 1,
        generator: format!("qoc-cli {}", env!("CARGO_PKG_VERSION")),
        command: "propagate",
        field_source: field_spec.to_string(),
        scenario: scenario.clone(),
        final_rho00: last.rho00,
        final_rho11: last.rho11,
        final_purity: purity(last),
        files: writer.into_files(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::write(&manifest_path, json)?;

    println!("final_rho00  = {}", full_precision(last.rho00));
    println!("final_rho11  = {}", full_precision(last.rho11));
    println!("final_purity = {}", full_precision(purity(last)));
    println!("wrote {}", manifest_path.display());
    Ok(())
}

/// Prints the builtin scenario registry.
pub fn execute_list() {
    for (name, description) in builtin_names() {
        println!("{name:<8}{description}");
    }
}

/// Parses `--functional` values.
pub fn parse_functional(name: &str) -> Result<TargetKind> {
    match name {
        "type1" => Ok(TargetKind::Type1),
        "type2" => Ok(TargetKind::Type2),
        other => Err(Error::Config(format!(
            "--functional: expected type1 or type2, got '{other}'"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_config_accepts_builtin_references() {
        let s = parse_config(r#"{"builtin": "fig1"}"#).unwrap();
        assert_eq!(s.name, "fig1");
        let err = parse_config(r#"{"builtin": "nope"}"#).unwrap_err().to_string();
        assert!(err.contains("nope"), "{err}");
        let err = parse_config(r#"{"builtin": "fig1", "extra": 1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("only key"), "{err}");
    }

    #[test]
    fn parse_config_names_offending_keys() {
        let err = parse_config(r#"{"name":"x","optimizer":{"mode":"penalized","a0_init":1.0},"grd":{}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("grd"), "{err}");
        let err = parse_config("not json").unwrap_err().to_string();
        assert!(err.contains("JSON"), "{err}");
        let err = parse_config(
            r#"{"name":"x","optimizer":{"mode":"penalized","a0_init":1.0},
                "window":{"edges":[20.0,5.0]}}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("edges must be strictly increasing"), "{err}");
    }

    #[test]
    fn tolerance_overrides_parse_and_apply() {
        let (name, value) = parse_tolerance("delta0_tol=1e-3").unwrap();
        assert_eq!(name, "delta0_tol");
        assert_eq!(value, 1e-3);
        assert!(parse_tolerance("delta0_tol").is_err());
        assert!(parse_tolerance("delta0_tol=abc").is_err());

        let mut t = Thresholds::default();
        apply_tolerance(&mut t, "gain_tol", 0.5).unwrap();
        assert_eq!(t.gain_tol, 0.5);
        apply_tolerance(&mut t, "required_streak", 3.0).unwrap();
        assert_eq!(t.required_streak, 3);
        let err = apply_tolerance(&mut t, "required_streak", 2.5)
            .unwrap_err()
            .to_string();
        assert!(err.contains("integer"), "{err}");
        let err = apply_tolerance(&mut t, "bogus", 1.0).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        // Overrides must still satisfy the threshold invariants.
        assert!(apply_tolerance(&mut t, "gain_tol", -1.0).is_err());
    }

    #[test]
    fn functional_names_parse() {
        assert_eq!(parse_functional("type1").unwrap(), TargetKind::Type1);
        assert_eq!(parse_functional("type2").unwrap(), TargetKind::Type2);
        assert!(parse_functional("type3").is_err());
    }

    #[test]
    fn scenario_selection_requires_exactly_one_source() {
        let err = load_scenario(Some("fig1"), Some(Path::new("x.json")), None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("not both"), "{err}");
        let err = load_scenario(None, None, None).unwrap_err().to_string();
        assert!(err.contains("--scenario"), "{err}");
        let s = load_scenario(None, None, Some("fig1")).unwrap();
        assert_eq!(s.name, "fig1");
        let s = load_scenario(Some("fig2"), None, None).unwrap();
        assert_eq!(s.name, "fig1");
    }
}
