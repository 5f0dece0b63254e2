//! Named, reproducible experiment scenarios and their artifacts.
//!
//! A [`Scenario`] bundles everything one study needs: the system and grid,
//! the target and control window, optimizer settings, and sweep axes over
//! dephasing, population decay, fluence target, penalty amplitude, and
//! functional type. [`run_scenario`] executes every sweep point (in parallel
//! when more than one core is available), records per-point outcomes without
//! aborting the rest on individual failures, and [`write_outputs`] emits
//! plot-ready CSV tables plus a JSON manifest that lists every file with its
//! size and SHA-256 digest. Reruns with the same scenario are byte-identical:
//! nothing here depends on time, threading order, or iteration order of any
//! hash map.
//!
//! The builtin registry ([`builtin`]) covers the standard study layout:
//! dephasing sweeps for both functional types, the fluence/dephasing grid,
//! the population-decay comparison with a cross-evaluated reference pulse,
//! penalty-amplitude ladders, convergence logs, purity-plane trajectories,
//! and the two-window fluence split.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    bloch_vector, propagate_density, ControlField, DensityState, Frame, SystemSpec, TimeGrid,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::objectives::{
    penalty_envelope, purity, purity_rate, trapezoid, ControlWindow, FunctionalReport,
    PenaltyWeight, TargetKind, TargetSpec,
};
use crate::optimizer::{
    optimize, ControlProblem, InitialField, OptimizationRun, OptimizeMode, OptimizerConfig,
    Thresholds,
};

/// Starting-field descriptor usable from scenario files (explicit sample
/// arrays come from field files, not from configs). `phase` is the carrier
/// phase of the seed, `cos(w t + phase)`; it matters for phase-free targets,
/// which keep the azimuth the seed creates rather than correcting it.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialFieldSpec {
    /// Envelope-shaped cosine at the target carrier with the given amplitude.
    RampedCosine {
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Same shape, amplitude chosen to realize the given weighted fluence.
    ScaledToFluence {
        fluence: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl InitialFieldSpec {
    fn to_initial_field(self) -> InitialField {
        match self {
            InitialFieldSpec::RampedCosine { amplitude, phase } => {
                InitialField::RampedCosine { amplitude, phase }
            }
            InitialFieldSpec::ScaledToFluence { fluence, phase } => {
                InitialField::ScaledToFluence { fluence, phase }
            }
        }
    }
}

fn default_step_size() -> f64 {
    1.0
}

fn default_max_iterations() -> usize {
    12000
}

/// Optimizer knobs as they appear in scenario files. Per-point values (from
/// sweep axes or the calibration table) override the scalars here.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub mode: OptimizeMode,
    /// Fluence target (fluence_targeted mode; overridden by an `f0` axis).
    #[serde(default)]
    pub f0: Option<f64>,
    /// Penalty amplitude: fixed in penalized mode, the controller's starting
    /// value in fluence_targeted mode (overridden by an `a0` axis or a
    /// calibration entry).
    #[serde(default)]
    pub a0_init: Option<f64>,
    /// Gradient step (penalty_free mode).
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Update mixing weight in (0, 1]. Unset means 1, except in
    /// fluence_targeted mode where it means 0.5: at full replacement the
    /// sweep overshoots the fluence in a decaying period-2 cycle and the
    /// signed gain criterion can never hold 30 iterations in a row.
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub initial_field: Option<InitialFieldSpec>,
}

impl OptimizerSettings {
    pub fn fluence_targeted(f0: f64) -> Self {
        OptimizerSettings {
            mode: OptimizeMode::FluenceTargeted,
            f0: Some(f0),
            a0_init: None,
            step_size: default_step_size(),
            max_iterations: default_max_iterations(),
            damping: None,
            thresholds: Thresholds::default(),
            initial_field: None,
        }
    }

    pub fn penalized(a0: f64) -> Self {
        OptimizerSettings {
            mode: OptimizeMode::Penalized,
            f0: None,
            a0_init: Some(a0),
            step_size: default_step_size(),
            max_iterations: default_max_iterations(),
            damping: None,
            thresholds: Thresholds::default(),
            initial_field: None,
        }
    }

    pub fn penalty_free(step_size: f64) -> Self {
        OptimizerSettings {
            mode: OptimizeMode::PenaltyFree,
            f0: None,
            a0_init: None,
            step_size,
            max_iterations: default_max_iterations(),
            damping: None,
            thresholds: Thresholds::default(),
            initial_field: None,
        }
    }
}

/// Sweep axes. Every combination (Cartesian product, listed order, last axis
/// fastest) becomes one sweep point; absent axes contribute the scenario's
/// base value.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub gamma_deph: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma_pop: Option<Vec<f64>>,
    #[serde(default)]
    pub f0: Option<Vec<f64>>,
    #[serde(default)]
    pub a0: Option<Vec<f64>>,
    #[serde(default)]
    pub target: Option<Vec<TargetKind>>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.gamma_deph.is_none()
            && self.gamma_pop.is_none()
            && self.f0.is_none()
            && self.a0.is_none()
            && self.target.is_none()
    }
}

/// One fully resolved sweep coordinate.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    /// Position in the scenario's sweep order.
    pub index: usize,
    pub gamma_deph: f64,
    pub gamma_pop: f64,
    /// Fluence target from the `f0` axis (None: scenario scalar applies).
    pub f0: Option<f64>,
    /// Penalty amplitude from the `a0` axis (None: calibration or scalar).
    pub a0: Option<f64>,
    pub target: TargetKind,
    /// Filesystem-safe name built from the swept axes, e.g. `gd0.05_f00.2`.
    pub label: String,
}

/// Starting penalty amplitude for the sweep points matching all the `Some`
/// coordinates of the entry. First matching entry wins. Values are measured
/// so the converged fluence at `a0_init` sits slightly below the point's
/// target and the controller approaches it from below.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationEntry {
    #[serde(default)]
    pub gamma_deph: Option<f64>,
    #[serde(default)]
    pub gamma_pop: Option<f64>,
    #[serde(default)]
    pub f0: Option<f64>,
    #[serde(default)]
    pub target: Option<TargetKind>,
    pub a0_init: f64,
}

fn floats_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

impl CalibrationEntry {
    fn matches(&self, point: &SweepPoint, effective_f0: Option<f64>) -> bool {
        if let Some(gd) = self.gamma_deph {
            if !floats_match(gd, point.gamma_deph) {
                return false;
            }
        }
        if let Some(gp) = self.gamma_pop {
            if !floats_match(gp, point.gamma_pop) {
                return false;
            }
        }
        if let Some(f0) = self.f0 {
            match effective_f0 {
                Some(pf) if floats_match(f0, pf) => {}
                _ => return false,
            }
        }
        if let Some(kind) = self.target {
            if kind != point.target {
                return false;
            }
        }
        true
    }
}

/// Which artifacts each sweep point emits.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSelection {
    /// `pulse.csv`: the designed field samples.
    pub pulses: bool,
    /// `populations.csv`: density-matrix components over time.
    pub populations: bool,
    /// `integrand.csv`: window, target expectation, and yield integrand.
    pub integrand: bool,
    /// `purity.csv`: purity and its analytic rate over time.
    pub purity: bool,
    /// `bloch.csv`: Bloch-vector components over time.
    pub bloch: bool,
    /// `trajectory.csv` + `trajectory_markers.csv` per point and one shared
    /// `contour_purity.csv`: the purity-plane view.
    pub trajectories: bool,
    /// `convergence.csv`: the per-iteration optimization log.
    pub convergence: bool,
}

impl Default for OutputSelection {
    fn default() -> Self {
        OutputSelection {
            pulses: true,
            populations: true,
            integrand: true,
            purity: false,
            bloch: false,
            trajectories: false,
            convergence: false,
        }
    }
}

impl OutputSelection {
    pub fn summary_only() -> Self {
        OutputSelection {
            pulses: false,
            populations: false,
            integrand: false,
            purity: false,
            bloch: false,
            trajectories: false,
            convergence: false,
        }
    }
}

/// Extra single-propagation evaluations per sweep point.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossEvalSpec {
    /// Evaluate each point's optimal field under the other tracking
    /// functional (same system), e.g. type-II pulses scored by type I.
    pub alternate_target: Option<TargetKind>,
    /// Evaluate the first sweep point's optimal field under every point's
    /// system (the "pulse designed without the extra decay channel" curve).
    pub reference_first_point: bool,
}

fn default_ramp_width() -> f64 {
    1.0
}

/// A named, fully specified experiment: base problem, optimizer, sweep axes,
/// calibration table, and output selection.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default)]
    pub grid: TimeGrid,
    #[serde(default)]
    pub target: TargetSpec,
    #[serde(default = "default_window")]
    pub window: ControlWindow,
    /// Width of the quarter-sine edges of the penalty shape.
    #[serde(default = "default_ramp_width")]
    pub ramp_width: f64,
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default)]
    pub outputs: OutputSelection,
    #[serde(default)]
    pub cross: CrossEvalSpec,
    #[serde(default)]
    pub calibration: Vec<CalibrationEntry>,
}

fn default_window() -> ControlWindow {
    ControlWindow {
        edges: vec![5.0, 20.0],
        alpha: 3.0,
    }
}

fn fmt_axis_value(v: f64) -> String {
    // Shortest round-trip representation: stable, filesystem-safe.
    format!("{v}")
}

impl Scenario {
    /// All sweep points in execution order (Cartesian product of the axes;
    /// later axes vary fastest).
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let gd: Vec<f64> = self
            .sweep
            .gamma_deph
            .clone()
            .unwrap_or_else(|| vec![self.system.gamma_deph]);
        let gp: Vec<f64> = self
            .sweep
            .gamma_pop
            .clone()
            .unwrap_or_else(|| vec![self.system.gamma_pop]);
        let f0s: Vec<Option<f64>> = match &self.sweep.f0 {
            Some(v) => v.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let a0s: Vec<Option<f64>> = match &self.sweep.a0 {
            Some(v) => v.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let targets: Vec<TargetKind> = self
            .sweep
            .target
            .clone()
            .unwrap_or_else(|| vec![self.target.kind]);

        let mut points = Vec::new();
        for &gamma_deph in &gd {
            for &gamma_pop in &gp {
                for &f0 in &f0s {
                    for &a0 in &a0s {
                        for &target in &targets {
                            let mut segments: Vec<String> = Vec::new();
                            if self.sweep.gamma_deph.is_some() {
                                segments.push(format!("gd{}", fmt_axis_value(gamma_deph)));
                            }
                            if self.sweep.gamma_pop.is_some() {
                                segments.push(format!("gp{}", fmt_axis_value(gamma_pop)));
                            }
                            if let Some(f0) = f0 {
                                segments.push(format!("f0{}", fmt_axis_value(f0)));
                            }
                            if let Some(a0) = a0 {
                                segments.push(format!("a0{}", fmt_axis_value(a0)));
                            }
                            if self.sweep.target.is_some() {
                                segments.push(target.name().to_string());
                            }
                            let label = if segments.is_empty() {
                                "point".to_string()
                            } else {
                                segments.join("_")
                            };
                            points.push(SweepPoint {
                                index: points.len(),
                                gamma_deph,
                                gamma_pop,
                                f0,
                                a0,
                                target,
                                label,
                            });
                        }
                    }
                }
            }
        }
        points
    }

    /// Fluence target in effect at a point (axis value, else scenario value).
    pub fn effective_f0(&self, point: &SweepPoint) -> Option<f64> {
        point.f0.or(self.optimizer.f0)
    }

    /// Penalty amplitude in effect at a point: `a0` axis, else the first
    /// matching calibration entry, else the scenario scalar.
    pub fn resolved_a0(&self, point: &SweepPoint) -> Option<f64> {
        if let Some(a0) = point.a0 {
            return Some(a0);
        }
        let f0 = self.effective_f0(point);
        if let Some(entry) = self.calibration.iter().find(|e| e.matches(point, f0)) {
            return Some(entry.a0_init);
        }
        self.optimizer.a0_init
    }

    /// The control problem one sweep point defines.
    pub fn problem_for(&self, point: &SweepPoint) -> ControlProblem {
        let mut system = self.system;
        system.gamma_deph = point.gamma_deph;
        system.gamma_pop = point.gamma_pop;
        let target = TargetSpec {
            kind: point.target,
            omega: self.target.omega,
            theta: self.target.theta,
        };
        ControlProblem {
            system,
            grid: self.grid,
            target,
            window: self.window.clone(),
            ramp_width: self.ramp_width,
        }
    }

    /// The optimizer configuration one sweep point runs with.
    pub fn optimizer_config_for(&self, point: &SweepPoint) -> Result<OptimizerConfig> {
        let s = &self.optimizer;
        let mut config = match s.mode {
            OptimizeMode::Penalized => {
                let a0 = self.resolved_a0(point).ok_or_else(|| {
                    Error::Config(format!(
                        "optimizer.a0_init: no penalty amplitude for sweep point '{}'",
                        point.label
                    ))
                })?;
                OptimizerConfig::penalized(a0)
            }
            OptimizeMode::FluenceTargeted => {
                let f0 = self.effective_f0(point).ok_or_else(|| {
                    Error::Config(
                        "optimizer.f0: fluence_targeted mode needs a fluence target".into(),
                    )
                })?;
                let a0 = self.resolved_a0(point).ok_or_else(|| {
                    Error::Config(format!(
                        "optimizer.a0_init: no starting penalty amplitude for sweep point '{}'",
                        point.label
                    ))
                })?;
                OptimizerConfig::fluence_targeted(f0, a0)
            }
            OptimizeMode::PenaltyFree => OptimizerConfig::penalty_free(s.step_size),
        };
        config.max_iterations = s.max_iterations;
        if let Some(d) = s.damping {
            config.damping = d;
        }
        config.thresholds = s.thresholds;
        if let Some(init) = s.initial_field {
            config.initial_field = init.to_initial_field();
        }
        config
            .validate()
            .map_err(|e| Error::Config(format!("sweep point '{}': {e}", point.label)))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("name: must not be empty".into()));
        }
        for (axis, values) in [
            ("sweep.gamma_deph", &self.sweep.gamma_deph),
            ("sweep.gamma_pop", &self.sweep.gamma_pop),
            ("sweep.f0", &self.sweep.f0),
            ("sweep.a0", &self.sweep.a0),
        ] {
            if let Some(values) = values {
                if values.is_empty() {
                    return Err(Error::Config(format!("{axis}: axis must not be empty")));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config(format!("{axis}: values must be finite")));
                }
            }
        }
        if let Some(kinds) = &self.sweep.target {
            if kinds.is_empty() {
                return Err(Error::Config("sweep.target: axis must not be empty".into()));
            }
        }
        if self.optimizer.mode != OptimizeMode::FluenceTargeted {
            if self.sweep.f0.is_some() || self.optimizer.f0.is_some() {
                return Err(Error::Config(format!(
                    "optimizer.f0: fluence targets are only meaningful in fluence_targeted mode (mode is {})",
                    self.optimizer.mode.name()
                )));
            }
        }
        if self.optimizer.mode == OptimizeMode::PenaltyFree && self.sweep.a0.is_some() {
            return Err(Error::Config(
                "sweep.a0: penalty amplitudes are unused in penalty_free mode".into(),
            ));
        }
        for entry in &self.calibration {
            if !entry.a0_init.is_finite() || entry.a0_init <= 0.0 {
                return Err(Error::Config(format!(
                    "calibration.a0_init: must be finite and > 0, got {}",
                    entry.a0_init
                )));
            }
        }

        let points = self.sweep_points();
        let mut labels = BTreeSet::new();
        for point in &points {
            if !labels.insert(point.label.clone()) {
                return Err(Error::Config(format!(
                    "sweep: duplicate axis values produce colliding point '{}'",
                    point.label
                )));
            }
            self.problem_for(point).validate().map_err(|e| match e {
                Error::Config(msg) => {
                    Error::Config(format!("sweep point '{}': {msg}", point.label))
                }
                other => other,
            })?;
            self.optimizer_config_for(point)?;
        }
        Ok(())
    }
}

/// One cross-evaluation row: a field propagated once under a (possibly
/// different) problem and scored without optimization.
#[derive(Clone, Debug, Serialize)]
pub struct CrossEvalRow {
    /// `alternate_target` or `reference_field`.
    pub kind: &'static str,
    /// Functional the evaluation used.
    pub target: TargetKind,
    pub functional: f64,
    pub fluence: f64,
}

/// Per-window fluence/yield split for multi-window scenarios. Window `j`
/// owns the time span from the midpoint before its opening edge to the
/// midpoint after its closing edge (span ends snap to the grid).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WindowSplit {
    pub window_index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub fluence: f64,
    pub functional: f64,
}

/// Outcome of one sweep point. `run` is `None` only if the point failed
/// outright (error carries the reason); a diverged or unconverged run is
/// still recorded with its termination reason.
#[derive(Clone, Debug)]
pub struct PointOutcome {
    pub point: SweepPoint,
    pub run: Option<OptimizationRun>,
    pub error: Option<String>,
    pub cross: Vec<CrossEvalRow>,
    pub window_splits: Vec<WindowSplit>,
}

impl PointOutcome {
    /// A point counts as failed if it produced no run or the run diverged.
    pub fn is_failure(&self) -> bool {
        use crate::optimizer::TerminationReason;
        match &self.run {
            None => true,
            Some(run) => run.termination == TerminationReason::Diverged,
        }
    }
}

/// All outcomes of one scenario, in sweep order.
#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub outcomes: Vec<PointOutcome>,
}

/// Propagates `field` once under `problem` and scores it; no optimization.
/// The penalty amplitude only affects the reported `penalty`/`objective`
/// bookkeeping, not the functional or fluence.
pub fn cross_evaluate(
    problem: &ControlProblem,
    penalty_a0: f64,
    field: &ControlField,
) -> Result<FunctionalReport> {
    let traj = propagate_density(
        &problem.system,
        &problem.grid,
        field,
        DensityState::ground(),
    )?;
    crate::objectives::evaluate_functionals(
        &problem.system,
        &problem.grid,
        field,
        &traj,
        &problem.target,
        &problem.window,
        &PenaltyWeight {
            a0: penalty_a0,
            ramp_width: problem.ramp_width,
        },
    )
}

/// Weighted fluence restricted to grid indices `[j0, j1]`, same conventions
/// as the full quadrature (lab `E^2/eta`; rotating frame cycle-averaged
/// `(Ex^2+Ey^2)/(2 eta)`; `0/0 -> 0` where the envelope vanishes).
fn fluence_between(
    grid: &TimeGrid,
    field: &ControlField,
    ramp_width: f64,
    j0: usize,
    j1: usize,
) -> f64 {
    let values = (j0..j1 + 1).map(|j| {
        let eta = penalty_envelope(ramp_width, grid.t_final, grid.time(j));
        let e2 = match field.sample(j) {
            crate::dynamics::FieldSample::Lab(e) => e * e,
            crate::dynamics::FieldSample::Rwa { x, y } => 0.5 * (x * x + y * y),
        };
        if eta < 1e-12 {
            0.0
        } else {
            e2 / eta
        }
    });
    trapezoid(values, grid.dt())
}

fn window_splits(
    problem: &ControlProblem,
    field: &ControlField,
    report: &FunctionalReport,
) -> Vec<WindowSplit> {
    let edges = &problem.window.edges;
    let m = edges.len() / 2;
    if m < 2 {
        return Vec::new();
    }
    let grid = &problem.grid;
    let n = grid.n_steps;
    let snap = |t: f64| -> usize {
        ((t / grid.t_final) * n as f64).round().clamp(0.0, n as f64) as usize
    };
    let mut splits = Vec::with_capacity(m);
    let mut j_start = 0usize;
    for w in 0..m {
        let j_end = if w + 1 < m {
            snap(0.5 * (edges[2 * w + 1] + edges[2 * w + 2]))
        } else {
            n
        };
        let functional = trapezoid(
            (j_start..j_end + 1).map(|j| {
                crate::objectives::window_envelope(&problem.window, grid.time(j))
                    * report.integrand[j]
            }),
            grid.dt(),
        );
        let fluence = fluence_between(grid, field, problem.ramp_width, j_start, j_end);
        splits.push(WindowSplit {
            window_index: w + 1,
            t_start: grid.time(j_start),
            t_end: grid.time(j_end),
            fluence,
            functional,
        });
        j_start = j_end;
    }
    splits
}

fn run_point(
    scenario: &Scenario,
    point: &SweepPoint,
    reference_field: Option<&ControlField>,
) -> PointOutcome {
    let problem = scenario.problem_for(point);
    let config = match scenario.optimizer_config_for(point) {
        Ok(c) => c,
        Err(e) => {
            return PointOutcome {
                point: point.clone(),
                run: None,
                error: Some(e.to_string()),
                cross: Vec::new(),
                window_splits: Vec::new(),
            }
        }
    };
    let run = match optimize(&problem, &config) {
        Ok(run) => run,
        Err(e) => {
            return PointOutcome {
                point: point.clone(),
                run: None,
                error: Some(e.to_string()),
                cross: Vec::new(),
                window_splits: Vec::new(),
            }
        }
    };

    let a0_for_reports = scenario.resolved_a0(point).unwrap_or(1.0);
    let mut cross = Vec::new();
    let mut error = None;
    if let Some(alt) = scenario.cross.alternate_target {
        let mut alt_problem = problem.clone();
        alt_problem.target = TargetSpec {
            kind: alt,
            omega: scenario.target.omega,
            theta: scenario.target.theta,
        };
        match cross_evaluate(&alt_problem, a0_for_reports, &run.field) {
            Ok(report) => cross.push(CrossEvalRow {
                kind: "alternate_target",
                target: alt,
                functional: report.functional,
                fluence: report.fluence,
            }),
            Err(e) => error = Some(format!("alternate-target evaluation: {e}")),
        }
    }
    if let Some(reference) = reference_field {
        match cross_evaluate(&problem, a0_for_reports, reference) {
            Ok(report) => cross.push(CrossEvalRow {
                kind: "reference_field",
                target: problem.target.kind,
                functional: report.functional,
                fluence: report.fluence,
            }),
            Err(e) => error = Some(format!("reference-field evaluation: {e}")),
        }
    }

    let window_splits = window_splits(&problem, &run.field, &run.report);
    PointOutcome {
        point: point.clone(),
        run: Some(run),
        error,
        cross,
        window_splits,
    }
}

/// Executes every sweep point of a validated scenario. Points run in
/// parallel (deterministically: results are ordered by sweep index, and each
/// point's computation is independent of scheduling). Individual failures
/// are recorded in the corresponding outcome; the scenario always completes.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioResult> {
    scenario.validate()?;
    let points = scenario.sweep_points();

    let mut outcomes: Vec<PointOutcome> = Vec::with_capacity(points.len());
    let rest: &[SweepPoint];
    let mut reference_field: Option<ControlField> = None;
    if scenario.cross.reference_first_point && !points.is_empty() {
        // The reference pulse must exist before the remaining points can be
        // scored against it.
        let first = run_point(scenario, &points[0], None);
        reference_field = first.run.as_ref().map(|r| r.field.clone());
        // The reference evaluated under its own system: trivially its own
        // yield, included so the reference curve spans every point.
        let first = match (&reference_field, first) {
            (Some(field), mut outcome) => {
                let problem = scenario.problem_for(&points[0]);
                let a0 = scenario.resolved_a0(&points[0]).unwrap_or(1.0);
                match cross_evaluate(&problem, a0, field) {
                    Ok(report) => outcome.cross.push(CrossEvalRow {
                        kind: "reference_field",
                        target: problem.target.kind,
                        functional: report.functional,
                        fluence: report.fluence,
                    }),
                    Err(e) => outcome.error = Some(format!("reference-field evaluation: {e}")),
                }
                outcome
            }
            (None, outcome) => outcome,
        };
        outcomes.push(first);
        rest = &points[1..];
    } else {
        rest = &points[..];
    }

    let computed: Vec<PointOutcome> = rest
        .par_iter()
        .map(|point| run_point(scenario, point, reference_field.as_ref()))
        .collect();
    outcomes.extend(computed);
    Ok(ScenarioResult {
        scenario: scenario.clone(),
        outcomes,
    })
}

/// One sample of a purity-plane trajectory.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PlanePoint {
    pub time: f64,
    pub rho00: f64,
    /// Coherence magnitude `|rho01|`.
    pub coherence: f64,
    pub purity: f64,
}

/// A trajectory drawn on the purity landscape: the parametric curve
/// `(rho00(t), |rho01(t)|)`, marker rows at a fixed time interval, and the
/// shared rectangular purity grid for contour rendering.
#[derive(Clone, Debug)]
pub struct PurityPlane {
    pub curve: Vec<PlanePoint>,
    pub markers: Vec<PlanePoint>,
    /// Grid lines along `rho00` (0 to 1).
    pub grid_rho00: Vec<f64>,
    /// Grid lines along `|rho01|` (0 to the physical bound 1/2).
    pub grid_coherence: Vec<f64>,
    /// Row-major purity values, `rho00` as the slow index.
    pub grid_purity: Vec<f64>,
}

/// Contour-grid resolution per axis.
pub const CONTOUR_POINTS: usize = 201;

/// Projects a trajectory onto the purity plane with markers every
/// `marker_interval` (which must divide the grid span).
pub fn purity_trajectory_export(
    traj: &Trajectory<DensityState>,
    marker_interval: f64,
) -> Result<PurityPlane> {
    let grid = &traj.grid;
    if !marker_interval.is_finite() || marker_interval <= 0.0 {
        return Err(Error::Config(format!(
            "marker_interval must be finite and > 0, got {marker_interval}"
        )));
    }
    let count = grid.t_final / marker_interval;
    if (count - count.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "marker_interval {} must divide the grid span {}",
            marker_interval, grid.t_final
        )));
    }
    let plane_point = |j: usize| {
        let s = &traj.states[j];
        PlanePoint {
            time: grid.time(j),
            rho00: s.rho00,
            coherence: s.rho01.norm(),
            purity: purity(s),
        }
    };
    let curve: Vec<PlanePoint> = (0..grid.n_points()).map(plane_point).collect();
    let markers: Vec<PlanePoint> = (0..=count.round() as usize)
        .map(|m| {
            let t = m as f64 * marker_interval;
            let j = ((t / grid.t_final) * grid.n_steps as f64).round() as usize;
            plane_point(j.min(grid.n_steps))
        })
        .collect();

    let grid_rho00: Vec<f64> = (0..CONTOUR_POINTS)
        .map(|i| i as f64 / (CONTOUR_POINTS - 1) as f64)
        .collect();
    let grid_coherence: Vec<f64> = (0..CONTOUR_POINTS)
        .map(|i| 0.5 * i as f64 / (CONTOUR_POINTS - 1) as f64)
        .collect();
    let mut grid_purity = Vec::with_capacity(CONTOUR_POINTS * CONTOUR_POINTS);
    for &r in &grid_rho00 {
        for &c in &grid_coherence {
            grid_purity.push(2.0 * r * r - 2.0 * r + 1.0 + 2.0 * c * c);
        }
    }
    Ok(PurityPlane {
        curve,
        markers,
        grid_rho00,
        grid_coherence,
        grid_purity,
    })
}

// ---------------------------------------------------------------------------
// File output
// ---------------------------------------------------------------------------

/// Marker interval used for builtin purity-plane exports.
pub const MARKER_INTERVAL: f64 = 2.5;

/// One emitted file as recorded in the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Summary of one sweep point as recorded in the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct PointSummary {
    pub label: String,
    pub gamma_deph: f64,
    pub gamma_pop: f64,
    pub target: TargetKind,
    pub f0_target: Option<f64>,
    pub a0_init: Option<f64>,
    pub termination: Option<&'static str>,
    pub error: Option<String>,
    pub iterations: Option<usize>,
    pub functional: Option<f64>,
    pub penalty: Option<f64>,
    pub objective: Option<f64>,
    pub fluence: Option<f64>,
    pub a0_final: Option<f64>,
    pub final_purity: Option<f64>,
    pub window_splits: Vec<WindowSplit>,
    pub cross: Vec<CrossEvalRow>,
}

/// The JSON manifest written alongside every scenario's artifacts: config
/// echo, per-point summaries, and a digest-checked file inventory. Contains
/// nothing time- or machine-dependent, so reruns are byte-identical.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub format_version: u32,
    pub generator: String,
    pub scenario: Scenario,
    pub points: Vec<PointSummary>,
    pub files: Vec<FileEntry>,
}

fn point_summary(scenario: &Scenario, outcome: &PointOutcome) -> PointSummary {
    let point = &outcome.point;
    let run = outcome.run.as_ref();
    let is_pf = scenario.optimizer.mode == OptimizeMode::PenaltyFree;
    PointSummary {
        label: point.label.clone(),
        gamma_deph: point.gamma_deph,
        gamma_pop: point.gamma_pop,
        target: point.target,
        f0_target: scenario.effective_f0(point),
        a0_init: if is_pf { None } else { scenario.resolved_a0(point) },
        termination: run.map(|r| r.termination.name()),
        error: outcome.error.clone(),
        iterations: run.map(|r| r.last_record().k),
        functional: run.map(|r| r.report.functional),
        penalty: run.map(|r| r.report.penalty),
        objective: run.map(|r| r.report.objective),
        fluence: run.map(|r| r.report.fluence),
        a0_final: run.map(|r| r.last_record().a0),
        final_purity: run.map(|r| purity(r.trajectory.states.last().expect("nonempty"))),
        window_splits: outcome.window_splits.clone(),
        cross: outcome.cross.clone(),
    }
}

/// 17 significant digits: enough to reproduce any f64 exactly on re-parse.
pub fn full_precision(v: f64) -> String {
    format!("{v:.16e}")
}

fn sig17(v: f64) -> String {
    full_precision(v)
}

fn opt_sig17(v: Option<f64>) -> String {
    v.map(sig17).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Hex SHA-256 of a byte string, as recorded in manifests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Writes files under one root directory while keeping the digest inventory
/// a manifest needs. One writer per output tree; nothing else may write
/// there concurrently.
pub struct ArtifactWriter {
    root: std::path::PathBuf,
    files: Vec<FileEntry>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Self {
        ArtifactWriter {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn emit(&mut self, rel_path: &str, bytes: &[u8]) -> Result<()> {
        let full = self.root.join(rel_path);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&full, bytes)?;
        self.files.push(FileEntry {
            path: rel_path.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn emit_csv(&mut self, rel_path: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        self.emit(rel_path, &csv_bytes(header, rows))
    }

    /// The inventory of everything emitted so far, in emission order.
    pub fn into_files(self) -> Vec<FileEntry> {
        self.files
    }
}

/// Header and formatted rows of a field file / pulse table. The time column
/// doubles as the grid metadata: uniform spacing from 0 to the final time.
fn field_csv_parts(grid: &TimeGrid, field: &ControlField) -> (Vec<&'static str>, Vec<Vec<String>>) {
    match field {
        ControlField::Lab(e) => (
            vec!["time", "field"],
            (0..grid.n_points())
                .map(|j| vec![sig17(grid.time(j)), sig17(e[j])])
                .collect(),
        ),
        ControlField::Rwa { x, y } => (
            vec!["time", "field_x", "field_y"],
            (0..grid.n_points())
                .map(|j| vec![sig17(grid.time(j)), sig17(x[j]), sig17(y[j])])
                .collect(),
        ),
    }
}

/// Writes a field in the pulse-table format (usable by `evaluate` and
/// `propagate` later).
pub fn write_field_csv(path: &Path, grid: &TimeGrid, field: &ControlField) -> Result<()> {
    let (header, rows) = field_csv_parts(grid, field);
    fs::write(path, csv_bytes(&header, &rows))?;
    Ok(())
}

/// Reads a field file, reconstructing the grid from the time column and
/// validating its uniformity.
pub fn read_field_csv(path: &Path) -> Result<(TimeGrid, ControlField)> {
    let file_err = |msg: String| Error::FieldFile(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| file_err(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| file_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let columns: Vec<&str> = headers.iter().map(String::as_str).collect();
    let frame = match columns.as_slice() {
        ["time", "field"] => Frame::LabExact,
        ["time", "field_x", "field_y"] => Frame::RotatingRwa,
        other => {
            return Err(file_err(format!(
                "unrecognized columns {other:?}; expected time,field or time,field_x,field_y"
            )))
        }
    };
    let mut times = Vec::new();
    let mut tracks: Vec<Vec<f64>> = vec![Vec::new(); columns.len() - 1];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| file_err(e.to_string()))?;
        let mut values = record.iter().map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| file_err(format!("row {}: '{s}' is not a number", row_idx + 2)))
        });
        times.push(values.next().expect("time column")?);
        for track in tracks.iter_mut() {
            track.push(values.next().ok_or_else(|| {
                file_err(format!("row {}: missing field column", row_idx + 2))
            })??);
        }
    }
    if times.len() < 3 {
        return Err(file_err(format!(
            "needs at least 3 samples, got {}",
            times.len()
        )));
    }
    let n_steps = times.len() - 1;
    let t_final = *times.last().expect("nonempty");
    let grid = TimeGrid::new(t_final, n_steps)
        .map_err(|e| file_err(format!("time column does not form a valid grid: {e}")))?;
    for (j, &t) in times.iter().enumerate() {
        if (t - grid.time(j)).abs() > 1e-9 * t_final.max(1.0) {
            return Err(file_err(format!(
                "time column is not uniform at row {}: {} vs expected {}",
                j + 2,
                t,
                grid.time(j)
            )));
        }
    }
    let mut it = tracks.into_iter();
    let field = match frame {
        Frame::LabExact => ControlField::Lab(it.next().expect("one track")),
        Frame::RotatingRwa => ControlField::Rwa {
            x: it.next().expect("x track"),
            y: it.next().expect("y track"),
        },
    };
    Ok((grid, field))
}

fn summary_rows(summaries: &[PointSummary]) -> (Vec<String>, Vec<Vec<String>>) {
    let max_windows = summaries
        .iter()
        .map(|s| s.window_splits.len())
        .max()
        .unwrap_or(0);
    let mut header: Vec<String> = [
        "label",
        "gamma_deph",
        "gamma_pop",
        "target",
        "f0_target",
        "a0_init",
        "functional",
        "penalty",
        "objective",
        "fluence",
        "a0_final",
        "iterations",
        "termination",
        "final_purity",
        "error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for w in 1..=max_windows {
        header.push(format!("window{w}_fluence"));
        header.push(format!("window{w}_functional"));
    }
    let rows = summaries
        .iter()
        .map(|s| {
            let mut row = vec![
                s.label.clone(),
                sig17(s.gamma_deph),
                sig17(s.gamma_pop),
                s.target.name().to_string(),
                opt_sig17(s.f0_target),
                opt_sig17(s.a0_init),
                opt_sig17(s.functional),
                opt_sig17(s.penalty),
                opt_sig17(s.objective),
                opt_sig17(s.fluence),
                opt_sig17(s.a0_final),
                s.iterations.map(|k| k.to_string()).unwrap_or_default(),
                s.termination.unwrap_or_default().to_string(),
                opt_sig17(s.final_purity),
                s.error.clone().unwrap_or_default(),
            ];
            for w in 0..max_windows {
                match s.window_splits.get(w) {
                    Some(split) => {
                        row.push(sig17(split.fluence));
                        row.push(sig17(split.functional));
                    }
                    None => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
            row
        })
        .collect();
    (header, rows)
}

fn write_point_series(
    writer: &mut ArtifactWriter,
    scenario: &Scenario,
    outcome: &PointOutcome,
) -> Result<()> {
    let Some(run) = &outcome.run else {
        return Ok(());
    };
    let label = &outcome.point.label;
    let grid = &scenario.grid;
    let outputs = &scenario.outputs;
    let problem = scenario.problem_for(&outcome.point);

    if outputs.pulses {
        let (header, rows) = field_csv_parts(grid, &run.field);
        writer.emit_csv(&format!("{label}/pulse.csv"), &header, &rows)?;
    }
    if outputs.populations {
        let rows: Vec<Vec<String>> = (0..grid.n_points())
            .map(|j| {
                let s = &run.trajectory.states[j];
                vec![
                    sig17(grid.time(j)),
                    sig17(s.rho00),
                    sig17(s.rho11),
                    sig17(s.rho01.re),
                    sig17(s.rho01.im),
                ]
            })
            .collect();
        writer.emit_csv(
            &format!("{label}/populations.csv"),
            &["time", "rho00", "rho11", "re_rho01", "im_rho01"],
            &rows,
        )?;
    }
    if outputs.integrand {
        let window = &scenario.window;
        let rows: Vec<Vec<String>> = (0..grid.n_points())
            .map(|j| {
                let e = run.report.expectation[j];
                vec![
                    sig17(grid.time(j)),
                    sig17(crate::objectives::window_envelope(window, grid.time(j))),
                    sig17(e.re),
                    sig17(e.im),
                    sig17(run.report.integrand[j]),
                ]
            })
            .collect();
        writer.emit_csv(
            &format!("{label}/integrand.csv"),
            &["time", "window", "re_expectation", "im_expectation", "integrand"],
            &rows,
        )?;
    }
    if outputs.purity {
        let rows: Vec<Vec<String>> = (0..grid.n_points())
            .map(|j| {
                let s = &run.trajectory.states[j];
                vec![
                    sig17(grid.time(j)),
                    sig17(purity(s)),
                    sig17(purity_rate(&problem.system, s)),
                ]
            })
            .collect();
        writer.emit_csv(
            &format!("{label}/purity.csv"),
            &["time", "purity", "purity_rate"],
            &rows,
        )?;
    }
    if outputs.bloch {
        let rows: Vec<Vec<String>> = (0..grid.n_points())
            .map(|j| {
                let [sx, sy, sz] = bloch_vector(&run.trajectory.states[j]);
                vec![sig17(grid.time(j)), sig17(sx), sig17(sy), sig17(sz)]
            })
            .collect();
        writer.emit_csv(
            &format!("{label}/bloch.csv"),
            &["time", "sx", "sy", "sz"],
            &rows,
        )?;
    }
    if outputs.trajectories {
        let plane = purity_trajectory_export(&run.trajectory, MARKER_INTERVAL)?;
        let plane_rows = |points: &[PlanePoint]| -> Vec<Vec<String>> {
            points
                .iter()
                .map(|p| {
                    vec![
                        sig17(p.time),
                        sig17(p.rho00),
                        sig17(p.coherence),
                        sig17(p.purity),
                    ]
                })
                .collect()
        };
        writer.emit_csv(
            &format!("{label}/trajectory.csv"),
            &["time", "rho00", "abs_rho01", "purity"],
            &plane_rows(&plane.curve),
        )?;
        writer.emit_csv(
            &format!("{label}/trajectory_markers.csv"),
            &["time", "rho00", "abs_rho01", "purity"],
            &plane_rows(&plane.markers),
        )?;
    }
    if outputs.convergence {
        let rows: Vec<Vec<String>> = run
            .history
            .iter()
            .map(|r| {
                vec![
                    r.k.to_string(),
                    sig17(r.functional),
                    sig17(r.penalty),
                    sig17(r.objective),
                    sig17(r.fluence),
                    sig17(r.a0),
                    opt_sig17(r.delta0),
                    opt_sig17(r.delta1),
                    opt_sig17(r.functional_gain),
                    opt_sig17(r.objective_gain),
                    r.streak.to_string(),
                ]
            })
            .collect();
        writer.emit_csv(
            &format!("{label}/convergence.csv"),
            &[
                "k",
                "functional",
                "penalty",
                "objective",
                "fluence",
                "a0",
                "delta0",
                "delta1",
                "functional_gain",
                "objective_gain",
                "streak",
            ],
            &rows,
        )?;
    }
    Ok(())
}

/// Writes all artifacts of a scenario result into `out_dir` and returns the
/// manifest (which is also written, last, as `manifest.json`). Refuses to
/// touch a directory holding a completed manifest unless `force` is set.
pub fn write_outputs(result: &ScenarioResult, out_dir: &Path, force: bool) -> Result<Manifest> {
    let manifest_path = out_dir.join("manifest.json");
    if manifest_path.exists() && !force {
        return Err(Error::OutputExists(format!(
            "{} already contains a completed run (use force to overwrite)",
            out_dir.display()
        )));
    }
    fs::create_dir_all(out_dir)?;
    let scenario = &result.scenario;
    let summaries: Vec<PointSummary> = result
        .outcomes
        .iter()
        .map(|o| point_summary(scenario, o))
        .collect();

    let mut writer = ArtifactWriter::new(out_dir);

    let (header, rows) = summary_rows(&summaries);
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    writer.emit_csv("summary.csv", &header_refs, &rows)?;

    let cross_rows: Vec<Vec<String>> = result
        .outcomes
        .iter()
        .flat_map(|o| {
            o.cross.iter().map(|c| {
                vec![
                    o.point.label.clone(),
                    c.kind.to_string(),
                    c.target.name().to_string(),
                    sig17(c.functional),
                    sig17(c.fluence),
                ]
            })
        })
        .collect();
    if !cross_rows.is_empty() {
        writer.emit_csv(
            "cross_evaluation.csv",
            &["label", "kind", "target", "functional", "fluence"],
            &cross_rows,
        )?;
    }

    if scenario.outputs.trajectories {
        // The landscape is state-space only; one copy serves every point.
        let mut rows = Vec::with_capacity(CONTOUR_POINTS * CONTOUR_POINTS);
        for i in 0..CONTOUR_POINTS {
            let r = i as f64 / (CONTOUR_POINTS - 1) as f64;
            for j in 0..CONTOUR_POINTS {
                let c = 0.5 * j as f64 / (CONTOUR_POINTS - 1) as f64;
                let p = 2.0 * r * r - 2.0 * r + 1.0 + 2.0 * c * c;
                rows.push(vec![sig17(r), sig17(c), sig17(p)]);
            }
        }
        writer.emit_csv("contour_purity.csv", &["rho00", "abs_rho01", "purity"], &rows)?;
    }

    for outcome in &result.outcomes {
        write_point_series(&mut writer, scenario, outcome)?;
    }

    let manifest = Manifest {
        format_version: 1,
        generator: format!("qoc-core {}", env!("CARGO_PKG_VERSION")),
        scenario: scenario.clone(),
        points: summaries,
        files: writer.into_files(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::write(&manifest_path, json)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Builtin scenarios
// ---------------------------------------------------------------------------

/// Canonical builtin scenario names with one-line descriptions.
pub fn builtin_names() -> &'static [(&'static str, &'static str)] {
    &[
        (
            "fig1",
            "Type-I optimal pulses across dephasing rates at fluence 0.2 (alias: fig2)",
        ),
        (
            "fig3",
            "Converged type-I yield over the dephasing x fluence grid",
        ),
        (
            "fig4",
            "Penalty-free saturation run at dephasing 0.5 (the unconstrained ceiling)",
        ),
        (
            "fig5",
            "Population-decay sweep at dephasing 0.2 with the no-decay reference pulse (alias: fig6)",
        ),
        (
            "fig7",
            "Type-II optimal pulses across dephasing rates, scored also by type I (alias: fig8)",
        ),
        (
            "fig9",
            "Purity-plane trajectories of the type-I pulses across dephasing rates",
        ),
        (
            "fig10",
            "Penalized runs over a ladder of penalty amplitudes at dephasing 0.2",
        ),
        (
            "fig11",
            "Convergence logs of the fluence controller for both functionals",
        ),
        (
            "fig12",
            "Two-window control at dephasing 0.5 across fluence targets (alias: fig13)",
        ),
    ]
}

/// Looks up a builtin scenario. Aliases (`fig2`, `fig6`, `fig8`, `fig13`)
/// resolve to the scenario holding the same underlying data.
pub fn builtin(name: &str) -> Option<Scenario> {
    let canonical = match name {
        "fig2" => "fig1",
        "fig6" => "fig5",
        "fig8" => "fig7",
        "fig13" => "fig12",
        other => other,
    };
    match canonical {
        "fig1" => Some(fig1()),
        "fig3" => Some(fig3()),
        "fig4" => Some(fig4()),
        "fig5" => Some(fig5()),
        "fig7" => Some(fig7()),
        "fig9" => Some(fig9()),
        "fig10" => Some(fig10()),
        "fig11" => Some(fig11()),
        "fig12" => Some(fig12()),
        _ => None,
    }
}

fn base_scenario(name: &str, description: &str, optimizer: OptimizerSettings) -> Scenario {
    Scenario {
        name: name.to_string(),
        description: description.to_string(),
        system: SystemSpec::default(),
        grid: TimeGrid::default(),
        target: TargetSpec::type1(),
        window: default_window(),
        ramp_width: default_ramp_width(),
        optimizer,
        sweep: SweepAxes::default(),
        outputs: OutputSelection::default(),
        cross: CrossEvalSpec::default(),
        calibration: Vec::new(),
    }
}

fn cal(gd: f64, f0: f64, kind: TargetKind, a0: f64) -> CalibrationEntry {
    CalibrationEntry {
        gamma_deph: Some(gd),
        gamma_pop: None,
        f0: Some(f0),
        target: Some(kind),
        a0_init: a0,
    }
}

/// Starting penalty amplitudes for the type-I dephasing sweep at f0 = 0.2,
/// production grid. Each value is the measured equilibrium amplitude backed
/// off by a few percent of fluence, so the controller approaches its target
/// from below. The bump at dephasing 0.1 is real: there the target fluence
/// sits close to the saturation fluence, where the equilibrium amplitude
/// grows steeply and the fluence-amplitude curve flattens.
const TYPE1_F02_A0: &[(f64, f64)] = &[
    (0.0, 0.88),
    (0.05, 1.012),
    (0.1, 4.702),
    (0.2, 0.662),
    (0.3, 0.314),
    (0.5, 0.251),
];

fn type1_f02_calibration() -> Vec<CalibrationEntry> {
    TYPE1_F02_A0
        .iter()
        .map(|&(gd, a0)| cal(gd, 0.2, TargetKind::Type1, a0))
        .collect()
}

fn fig1() -> Scenario {
    let mut s = base_scenario(
        "fig1",
        "Type-I optimal pulses and their dynamics for dephasing rates \
         0, 0.05, 0.1, 0.2, 0.5 at target fluence 0.2",
        OptimizerSettings::fluence_targeted(0.2),
    );
    s.sweep.gamma_deph = Some(vec![0.0, 0.05, 0.1, 0.2, 0.5]);
    s.outputs.purity = true;
    s.calibration = type1_f02_calibration();
    s
}

fn fig3() -> Scenario {
    let mut s = base_scenario(
        "fig3",
        "Converged type-I yield over dephasing rates 0..0.5 and fluence \
         targets 0.1, 0.2, 0.3",
        OptimizerSettings::fluence_targeted(0.2),
    );
    s.optimizer.f0 = None;
    s.sweep.gamma_deph = Some(vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.5]);
    s.sweep.f0 = Some(vec![0.1, 0.2, 0.3]);
    s.outputs = OutputSelection::summary_only();
    let mut table = Vec::new();
    for &(gd, f01, f03) in TYPE1_F01_F03_A0 {
        table.push(cal(gd, 0.1, TargetKind::Type1, f01));
        table.push(cal(gd, 0.3, TargetKind::Type1, f03));
    }
    table.extend(type1_f02_calibration());
    s.calibration = table;
    s
}

/// Starting penalty amplitudes for the type-I grid at f0 = 0.1 and 0.3
/// (columns: dephasing rate, a0 for f0 = 0.1, a0 for f0 = 0.3). The f0 = 0.3
/// column is near-saturated below dephasing 0.3 — extra fluence buys almost
/// no yield there — so its equilibrium amplitudes are large and steep between
/// neighboring rates; the controller walks the rest of the way itself. At
/// dephasing 0.1 the equilibrium was too flat to pin down, so that entry is a
/// mid-range start rather than a measurement.
const TYPE1_F01_F03_A0: &[(f64, f64, f64)] = &[
    (0.0, 0.0447, 21.40),
    (0.05, 0.0737, 4.407),
    (0.1, 0.0766, 20.0),
    (0.2, 0.0773, 38.92),
    (0.3, 0.0818, 1.405),
    (0.5, 0.1012, 0.557),
];

fn fig4() -> Scenario {
    let mut s = base_scenario(
        "fig4",
        "Penalty-free run at dephasing 0.5: the saturated yield the fluence \
         studies approach",
        OptimizerSettings::penalty_free(2.0),
    );
    s.system.gamma_deph = 0.5;
    s.outputs.purity = true;
    s
}

fn fig5() -> Scenario {
    let mut s = base_scenario(
        "fig5",
        "Type-I yield vs population-decay rate at dephasing 0.2, fluence 0.2, \
         with the no-decay pulse cross-evaluated at every rate",
        OptimizerSettings::fluence_targeted(0.2),
    );
    s.system.gamma_deph = 0.2;
    s.sweep.gamma_pop = Some(vec![0.0, 0.025, 0.05, 0.075, 0.1]);
    s.cross.reference_first_point = true;
    s.calibration = GPOP_F02_A0
        .iter()
        .map(|&(gp, a0)| CalibrationEntry {
            gamma_deph: None,
            gamma_pop: Some(gp),
            f0: Some(0.2),
            target: Some(TargetKind::Type1),
            a0_init: a0,
        })
        .collect();
    s
}

/// Starting penalty amplitudes for the population-decay sweep at
/// dephasing 0.2, fluence 0.2. Decay feeds the tracked coherence, so the
/// equilibrium amplitude drops as the decay rate grows.
const GPOP_F02_A0: &[(f64, f64)] = &[
    (0.0, 0.662),
    (0.025, 0.370),
    (0.05, 0.261),
    (0.075, 0.201),
    (0.1, 0.164),
];

/// Starting penalty amplitudes for the type-II dephasing sweep at f0 = 0.2.
const TYPE2_F02_A0: &[(f64, f64)] = &[
    (0.0, 0.354),
    (0.05, 0.454),
    (0.1, 0.674),
    (0.2, 0.533),
    (0.3, 0.425),
    (0.5, 0.505),
];

fn type2_f02_calibration() -> Vec<CalibrationEntry> {
    TYPE2_F02_A0
        .iter()
        .map(|&(gd, a0)| cal(gd, 0.2, TargetKind::Type2, a0))
        .collect()
}

fn fig7() -> Scenario {
    let mut s = base_scenario(
        "fig7",
        "Type-II optimal pulses across dephasing rates at fluence 0.2, each \
         also scored by the type-I functional",
        OptimizerSettings::fluence_targeted(0.2),
    );
    s.target = TargetSpec::type2();
    s.sweep.gamma_deph = Some(vec![0.0, 0.05, 0.1, 0.2, 0.5]);
    s.cross.alternate_target = Some(TargetKind::Type1);
    s.calibration = type2_f02_calibration();
    // The type-II functional is phase-free, so the optimum keeps the seed's
    // carrier phase. A plain cosine drives the coherence in quadrature with
    // the phase-locked type-I target; seeding at pi/2 makes the stored pulses
    // directly comparable under the type-I score.
    s.optimizer.initial_field = Some(InitialFieldSpec::ScaledToFluence {
        fluence: 0.1,
        phase: std::f64::consts::FRAC_PI_2,
    });
    s
}

fn fig9() -> Scenario {
    let mut s = base_scenario(
        "fig9",
        "Purity-plane view (rho00 vs |rho01| with time markers) of the \
         type-I pulses across dephasing rates",
        OptimizerSettings::fluence_targeted(0.2),
    );
    s.sweep.gamma_deph = Some(vec![0.0, 0.05, 0.1, 0.2, 0.5]);
    s.outputs = OutputSelection::summary_only();
    s.outputs.trajectories = true;
    s.outputs.purity = true;
    s.calibration = type1_f02_calibration();
    s
}

fn fig10() -> Scenario {
    let mut s = base_scenario(
        "fig10",
        "Penalized optimization at dephasing 0.2 over a ladder of penalty \
         amplitudes; per-iteration logs show the monotone objective",
        OptimizerSettings::penalized(1.0),
    );
    s.optimizer.a0_init = None;
    s.system.gamma_deph = 0.2;
    s.sweep.a0 = Some(vec![0.1, 0.2, 0.3, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0]);
    s.outputs = OutputSelection::summary_only();
    s.outputs.convergence = true;
    s
}

fn fig11() -> Scenario {
    let mut s = base_scenario(
        "fig11",
        "Fluence-controller convergence logs for both functionals at \
         dephasing 0 and 0.3, fluence 0.2",
        OptimizerSettings::fluence_targeted(0.2),
    );
    s.sweep.gamma_deph = Some(vec![0.0, 0.3]);
    s.sweep.target = Some(vec![TargetKind::Type1, TargetKind::Type2]);
    s.outputs = OutputSelection::summary_only();
    s.outputs.convergence = true;
    s.calibration = [type1_f02_calibration(), type2_f02_calibration()].concat();
    // Seed both functionals in phase with the locked target (see fig7); the
    // phase-locked runs correct their carrier anyway, so one seed serves the
    // whole target axis.
    s.optimizer.initial_field = Some(InitialFieldSpec::ScaledToFluence {
        fluence: 0.1,
        phase: std::f64::consts::FRAC_PI_2,
    });
    s
}

fn fig12() -> Scenario {
    let mut s = base_scenario(
        "fig12",
        "Two control windows (5-10 and 15-20) at dephasing 0.5 across \
         fluence targets; summaries carry the per-window fluence/yield split",
        OptimizerSettings::fluence_targeted(0.2),
    );
    s.optimizer.f0 = None;
    s.system.gamma_deph = 0.5;
    s.window = ControlWindow {
        edges: vec![5.0, 10.0, 15.0, 20.0],
        alpha: 3.0,
    };
    s.sweep.f0 = Some(vec![0.2, 0.3, 0.5, 0.7, 0.9]);
    s.calibration = TWOWIN_GD05_A0
        .iter()
        .map(|&(f0, a0)| cal(0.5, f0, TargetKind::Type1, a0))
        .collect();
    s
}

/// Starting penalty amplitudes for the two-window sweep at dephasing 0.5.
/// The two windows admit less useful fluence than the single wide one:
/// saturation sets in near fluence 0.7, so the 0.9 target is best-effort
/// (the controller raises the amplitude, fluence plateaus, yield stays at
/// the ceiling).
const TWOWIN_GD05_A0: &[(f64, f64)] = &[
    (0.2, 0.288),
    (0.3, 0.527),
    (0.5, 1.834),
    (0.7, 10.03),
    (0.9, 11.42),
];
