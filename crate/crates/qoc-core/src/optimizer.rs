//! Iterative pulse design.
//!
//! The stationarity condition of the objective `J = F - P` ties the field to
//! the state/costate pair at every instant:
//!
//! ```text
//! E_q(t) = -A(t) * Im<<xi(t) | [U_q, rho(t)]>>      (U = mu01 sigma_x lab;
//!                                                    U_q = mu01 sigma_q rwa)
//! ```
//!
//! Three drivers solve the coupled equations:
//!
//! * **Penalized** (fixed `A0`): two-sweep iteration — costate backward under
//!   the previous field, then the state forward from |0><0| while each field
//!   sample is replaced by the damped stationarity value the moment the sweep
//!   reaches it. For the phase-locked target this update never decreases `J`;
//!   the run stops once the gain falls inside `[0, delta_j_tol]`.
//! * **PenaltyFree**: plain gradient ascent on `F` alone with an
//!   `eta(t)`-shaped step (keeping the pulse edges smooth), a step-halving
//!   backtracking rule, and the same gain-band stop on `F`.
//! * **FluenceTargeted**: wraps one penalized sweep per outer iteration and
//!   retunes `A0 <- sqrt(f0/f) * A0` (change clamped to 0.1%) so the weighted
//!   fluence lands on `f0`. Convergence requires the relative fluence error
//!   `delta0`, its per-iteration drift `delta1 = (f_k - f_{k-1})/f_k`, and the
//!   yield gain to sit inside their bands for 30 consecutive iterations, and
//!   is only declared once the fluence matches `f0` to 1e-10 relative.
//!
//! The forward sweep advances with the same RK4 step as plain propagation.
//! Because the updated sample at the end of each step depends on the state
//! that step produces, each step runs a short fixed-point (predictor ->
//! corrector) loop on that one sample; it contracts at O(dt) and reaches
//! machine agreement in a few passes. The returned trajectory is re-propagated
//! from the finished field so that stored (field, trajectory) pairs are
//! exactly what any consumer would recompute.
//!
//! Everything here is deterministic: identical configurations produce
//! bit-identical fields and iteration histories.

use serde::Serialize;

use crate::dynamics::{
    density_step, propagate_costate, propagate_density, ControlField, CostateState, DensityState,
    FieldSample, Frame, SystemSpec, TimeGrid, Trajectory,
};
use crate::error::{Error, Result};
use crate::mat2::Mat2;
use crate::objectives::{
    costate_source_track, evaluate_functionals, penalty_envelope, penalty_weight, ControlWindow,
    FunctionalReport, PenaltyWeight, TargetSpec,
};

/// How the field cost is treated during iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeMode {
    /// Fixed penalty amplitude `a0`.
    Penalized,
    /// No fluence cost; maximize the yield alone.
    PenaltyFree,
    /// Penalized sweeps with `a0` retuned each iteration to hit a fluence.
    FluenceTargeted,
}

impl OptimizeMode {
    pub fn name(self) -> &'static str {
        match self {
            OptimizeMode::Penalized => "penalized",
            OptimizeMode::PenaltyFree => "penalty_free",
            OptimizeMode::FluenceTargeted => "fluence_targeted",
        }
    }
}

/// Convergence bands. All are strict upper bounds on magnitudes except
/// `gain_tol`, which bounds the per-iteration objective/yield gain band
/// `(0, gain_tol]`.
#[derive(Clone, Copy, Debug, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Gain band for the stopping rules (penalized: objective; others: yield).
    pub gain_tol: f64,
    /// Bound on |delta0| = |f - f0| / f0 during the streak.
    pub delta0_tol: f64,
    /// Bound on |delta1| = |f_k - f_{k-1}| / f_k during the streak.
    pub delta1_tol: f64,
    /// Consecutive iterations all criteria must hold.
    pub required_streak: u32,
    /// Final relative fluence mismatch allowed in a `Converged` run.
    pub final_fluence_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            gain_tol: 1e-8,
            delta0_tol: 1e-4,
            delta1_tol: 1e-6,
            required_streak: 30,
            final_fluence_tol: 1e-10,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("gain_tol", self.gain_tol),
            ("delta0_tol", self.delta0_tol),
            ("delta1_tol", self.delta1_tol),
            ("final_fluence_tol", self.final_fluence_tol),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if self.required_streak == 0 {
            return Err("required_streak must be >= 1".into());
        }
        Ok(())
    }
}

/// Starting field for an optimization.
///
/// `phase` is the carrier phase: the lab seed is `cos(w t + phase)` under the
/// envelope. Phase-locked (type-I-style) functionals correct the carrier
/// phase themselves, but phase-free functionals keep whatever azimuth the
/// seed creates, so a seed in phase with the locked target (phase `pi/2`
/// here, since a plain cosine drives the coherence in quadrature) is what
/// makes later cross-scoring between the two functionals meaningful.
#[derive(Clone, Debug)]
pub enum InitialField {
    /// `a * eta(t) * cos(w t + phase)` in the lab frame (`w` = target
    /// carrier); the equivalent quadrature pair in the rotating frame.
    RampedCosine { amplitude: f64, phase: f64 },
    /// Same shape with the amplitude set so the weighted fluence equals the
    /// given value.
    ScaledToFluence { fluence: f64, phase: f64 },
    /// Explicit samples (frame and length must match the problem).
    Explicit(ControlField),
}

impl InitialField {
    pub fn build(&self, problem: &ControlProblem) -> Result<ControlField> {
        match self {
            InitialField::RampedCosine { amplitude, phase } => {
                Ok(ramped_cosine(problem, *amplitude, *phase))
            }
            InitialField::ScaledToFluence { fluence, phase } => {
                if !fluence.is_finite() || *fluence <= 0.0 {
                    return Err(Error::Config(format!(
                        "initial-field fluence must be finite and > 0, got {fluence}"
                    )));
                }
                let unit = ramped_cosine(problem, 1.0, *phase);
                let (f1, _) =
                    crate::objectives::weighted_fluence(&problem.grid, &unit, problem.ramp_width);
                if !(f1 > 0.0) {
                    return Err(Error::Config(
                        "unit guess field has zero fluence; cannot scale to a target".into(),
                    ));
                }
                let scale = (fluence / f1).sqrt();
                Ok(scale_field(&unit, scale))
            }
            InitialField::Explicit(field) => {
                field.check_matches(&problem.system, &problem.grid)?;
                if !field.max_abs().is_finite() {
                    return Err(Error::Config("initial field has non-finite samples".into()));
                }
                Ok(field.clone())
            }
        }
    }
}

fn ramped_cosine(problem: &ControlProblem, amplitude: f64, phase: f64) -> ControlField {
    let grid = &problem.grid;
    let eta = |t: f64| penalty_envelope(problem.ramp_width, grid.t_final, t);
    match problem.system.frame {
        Frame::LabExact => {
            let omega = problem.target.carrier(&problem.system);
            ControlField::Lab(
                grid.times()
                    .map(|t| amplitude * eta(t) * (omega * t + phase).cos())
                    .collect(),
            )
        }
        // cos(w t + phase) = cos(phase) cos(w t) - sin(phase) sin(w t),
        // and the quadrature tracks multiply cos(w t) and sin(w t).
        Frame::RotatingRwa => ControlField::Rwa {
            x: grid
                .times()
                .map(|t| amplitude * phase.cos() * eta(t))
                .collect(),
            y: grid
                .times()
                .map(|t| -amplitude * phase.sin() * eta(t))
                .collect(),
        },
    }
}

fn scale_field(field: &ControlField, scale: f64) -> ControlField {
    match field {
        ControlField::Lab(e) => ControlField::Lab(e.iter().map(|v| v * scale).collect()),
        ControlField::Rwa { x, y } => ControlField::Rwa {
            x: x.iter().map(|v| v * scale).collect(),
            y: y.iter().map(|v| v * scale).collect(),
        },
    }
}

/// Everything that defines one pulse-design problem except the penalty
/// amplitude (which belongs to the optimizer: fluence targeting retunes it).
#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub system: SystemSpec,
    pub grid: TimeGrid,
    pub target: TargetSpec,
    pub window: ControlWindow,
    /// Width of the quarter-sine edges of the penalty shape `eta(t)`.
    pub ramp_width: f64,
}

impl ControlProblem {
    pub fn validate(&self) -> Result<()> {
        self.system.validate().map_err(Error::Config)?;
        self.grid.validate().map_err(Error::Config)?;
        self.target.validate().map_err(Error::Config)?;
        self.window.validate().map_err(Error::Config)?;
        if !self.ramp_width.is_finite() || self.ramp_width <= 0.0 {
            return Err(Error::Config(format!(
                "ramp_width must be finite and > 0, got {}",
                self.ramp_width
            )));
        }
        if 2.0 * self.ramp_width > self.grid.t_final {
            return Err(Error::Config(format!(
                "ramp_width {} leaves no plateau on [0, {}]",
                self.ramp_width, self.grid.t_final
            )));
        }
        if let Some(advisory) = self.system.physicality_advisory() {
            eprintln!("warning: {advisory}");
        }
        Ok(())
    }

    fn penalty(&self, a0: f64) -> PenaltyWeight {
        PenaltyWeight {
            a0,
            ramp_width: self.ramp_width,
        }
    }
}

/// Knobs of one optimization run.
#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    pub mode: OptimizeMode,
    /// Fluence the controller steers to (FluenceTargeted only).
    pub target_fluence: f64,
    /// Penalty amplitude: fixed in Penalized mode, starting value in
    /// FluenceTargeted mode, unused in PenaltyFree mode.
    pub a0_init: f64,
    pub max_iterations: usize,
    /// Mixing weight of the stationarity update (1 = full replacement).
    pub damping: f64,
    /// Gradient-ascent step for PenaltyFree mode.
    pub step_size: f64,
    pub thresholds: Thresholds,
    pub initial_field: InitialField,
}

impl OptimizerConfig {
    pub fn penalized(a0: f64) -> Self {
        OptimizerConfig {
            mode: OptimizeMode::Penalized,
            target_fluence: 0.0,
            a0_init: a0,
            max_iterations: 5000,
            damping: 1.0,
            step_size: 1.0,
            thresholds: Thresholds::default(),
            initial_field: InitialField::ScaledToFluence { fluence: 0.1, phase: 0.0 },
        }
    }

    /// Fluence-targeted defaults. Damping is 0.5 rather than 1: the
    /// full-replacement sweep overshoots the fluence every pass (a decaying
    /// period-2 oscillation), which keeps the signed gain criterion from ever
    /// holding 30 times in a row; half-mixing makes the approach one-sided.
    pub fn fluence_targeted(f0: f64, a0_init: f64) -> Self {
        OptimizerConfig {
            mode: OptimizeMode::FluenceTargeted,
            target_fluence: f0,
            a0_init,
            max_iterations: 12000,
            damping: 0.5,
            step_size: 1.0,
            thresholds: Thresholds::default(),
            initial_field: InitialField::ScaledToFluence { fluence: 0.5 * f0, phase: 0.0 },
        }
    }

    pub fn penalty_free(step_size: f64) -> Self {
        OptimizerConfig {
            mode: OptimizeMode::PenaltyFree,
            target_fluence: 0.0,
            a0_init: 1.0,
            max_iterations: 5000,
            damping: 1.0,
            step_size,
            thresholds: Thresholds::default(),
            initial_field: InitialField::ScaledToFluence { fluence: 0.1, phase: 0.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate().map_err(Error::Config)?;
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if !self.damping.is_finite() || self.damping <= 0.0 || self.damping > 1.0 {
            return Err(Error::Config(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        match self.mode {
            OptimizeMode::Penalized | OptimizeMode::FluenceTargeted => {
                if !self.a0_init.is_finite() || self.a0_init <= 0.0 {
                    return Err(Error::Config(format!(
                        "a0_init must be finite and > 0, got {}",
                        self.a0_init
                    )));
                }
            }
            OptimizeMode::PenaltyFree => {
                if !self.step_size.is_finite() || self.step_size <= 0.0 {
                    return Err(Error::Config(format!(
                        "step_size must be finite and > 0, got {}",
                        self.step_size
                    )));
                }
            }
        }
        if self.mode == OptimizeMode::FluenceTargeted
            && (!self.target_fluence.is_finite() || self.target_fluence <= 0.0)
        {
            return Err(Error::Config(format!(
                "target_fluence must be finite and > 0, got {}",
                self.target_fluence
            )));
        }
        Ok(())
    }
}

/// One row of an optimization log.
#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    /// Iteration index; 0 is the evaluated initial guess.
    pub k: usize,
    /// Yield `F`.
    pub functional: f64,
    /// Field cost `P` (0 in penalty-free runs).
    pub penalty: f64,
    /// Objective `J = F - P` (`J = F` in penalty-free runs).
    pub objective: f64,
    /// Weighted fluence `f`.
    pub fluence: f64,
    /// Penalty amplitude used this iteration (0 in penalty-free runs).
    pub a0: f64,
    /// Relative fluence error `(f - f0)/f0`; None when no fluence target.
    pub delta0: Option<f64>,
    /// Relative fluence drift `(f_k - f_{k-1})/f_k`; None on the first row.
    pub delta1: Option<f64>,
    /// Yield gain `F_k - F_{k-1}`; None on the first row.
    pub functional_gain: Option<f64>,
    /// Objective gain `J_k - J_{k-1}`; None on the first row.
    pub objective_gain: Option<f64>,
    /// |delta0| within its band.
    pub fluence_on_target: bool,
    /// |delta1| within its band.
    pub fluence_settled: bool,
    /// Yield gain inside `(0, gain_tol]`.
    pub gain_in_band: bool,
    /// Consecutive iterations (including this one) with all three criteria.
    pub streak: u32,
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Converged,
    MaxIterations,
    Diverged,
}

impl TerminationReason {
    pub fn name(self) -> &'static str {
        match self {
            TerminationReason::Converged => "converged",
            TerminationReason::MaxIterations => "max_iterations",
            TerminationReason::Diverged => "diverged",
        }
    }
}

/// Completed optimization: the designed field, its trajectory and evaluation,
/// and the full per-iteration history.
#[derive(Clone, Debug)]
pub struct OptimizationRun {
    pub config: OptimizerConfig,
    pub field: ControlField,
    pub trajectory: Trajectory<DensityState>,
    pub report: FunctionalReport,
    pub history: Vec<IterationRecord>,
    pub termination: TerminationReason,
}

impl OptimizationRun {
    pub fn last_record(&self) -> &IterationRecord {
        self.history.last().expect("history is never empty")
    }
}

/// Receiver for per-iteration progress (convergence logs, live displays).
pub trait ProgressSink {
    fn on_iteration(&mut self, record: &IterationRecord);
}

/// Discards progress records.
pub struct SilentProgress;

impl ProgressSink for SilentProgress {
    fn on_iteration(&mut self, _record: &IterationRecord) {}
}

impl ProgressSink for Vec<IterationRecord> {
    fn on_iteration(&mut self, record: &IterationRecord) {
        self.push(record.clone());
    }
}

/// Commutator generators of the field response, one per control track. The
/// stationarity update reads `E_q = -A(t) Im<<xi|[U_q, rho]>>`. In the lab
/// frame `U = mu01 sigma_x`. In the rotating frame the quadrature coupling in
/// the Hamiltonian carries 1/2, but the fluence convention halves the penalty
/// as well, so the two factors cancel and `U_q = mu01 sigma_q` there too.
fn update_operators(sys: &SystemSpec) -> Vec<Mat2> {
    let mu = sys.mu01;
    let zero = C64::new(0.0, 0.0);
    let sigma_x = Mat2::new(zero, C64::new(mu, 0.0), C64::new(mu, 0.0), zero);
    match sys.frame {
        Frame::LabExact => vec![sigma_x],
        Frame::RotatingRwa => {
            let sigma_y = Mat2::new(zero, C64::new(0.0, -mu), C64::new(0.0, mu), zero);
            vec![sigma_x, sigma_y]
        }
    }
}

use num_complex::Complex64 as C64;

#[inline]
fn stationary_value(op: &Mat2, a: f64, xi: Mat2, rho: Mat2) -> f64 {
    -a * xi.inner(op.commutator(rho)).im
}

/// Stationarity value of the field at one instant:
/// `-A(t) Im<<xi(t)|[U_q, rho(t)]>>` per control track.
pub fn field_update(
    sys: &SystemSpec,
    penalty: &PenaltyWeight,
    t_final: f64,
    t: f64,
    xi: &CostateState,
    rho: &DensityState,
) -> FieldSample {
    let a = penalty_weight(penalty, t_final, t);
    let ops = update_operators(sys);
    let rho_m = rho.to_matrix();
    match sys.frame {
        Frame::LabExact => FieldSample::Lab(stationary_value(&ops[0], a, *xi, rho_m)),
        Frame::RotatingRwa => FieldSample::Rwa {
            x: stationary_value(&ops[0], a, *xi, rho_m),
            y: stationary_value(&ops[1], a, *xi, rho_m),
        },
    }
}

/// Per-track field samples as a small fixed array (1 track lab, 2 rwa).
#[derive(Clone, Copy)]
struct TrackSample {
    v: [f64; 2],
    tracks: usize,
}

impl TrackSample {
    fn to_sample(self, frame: Frame) -> FieldSample {
        match frame {
            Frame::LabExact => FieldSample::Lab(self.v[0]),
            Frame::RotatingRwa => FieldSample::Rwa {
                x: self.v[0],
                y: self.v[1],
            },
        }
    }

    fn mid(a: TrackSample, b: TrackSample) -> TrackSample {
        TrackSample {
            v: [0.5 * (a.v[0] + b.v[0]), 0.5 * (a.v[1] + b.v[1])],
            tracks: a.tracks,
        }
    }

    fn max_delta(a: TrackSample, b: TrackSample) -> f64 {
        (0..a.tracks)
            .map(|q| (a.v[q] - b.v[q]).abs())
            .fold(0.0, f64::max)
    }
}

fn track_sample(field: &ControlField, j: usize) -> TrackSample {
    match field.sample(j) {
        FieldSample::Lab(e) => TrackSample {
            v: [e, 0.0],
            tracks: 1,
        },
        FieldSample::Rwa { x, y } => TrackSample {
            v: [x, y],
            tracks: 2,
        },
    }
}

fn collect_tracks(frame: Frame, tracks: Vec<Vec<f64>>) -> ControlField {
    let mut it = tracks.into_iter();
    match frame {
        Frame::LabExact => ControlField::Lab(it.next().expect("one lab track")),
        Frame::RotatingRwa => {
            let x = it.next().expect("x track");
            let y = it.next().expect("y track");
            ControlField::Rwa { x, y }
        }
    }
}

/// Fixed-point loop cap for the per-step implicit update. The end-of-step
/// sample feeds only the last RK4 stage, so the map contracts at O(dt) and a
/// handful of passes reach machine agreement.
const STEP_FIXED_POINT_MAX: usize = 16;
const STEP_FIXED_POINT_RTOL: f64 = 1e-13;

/// One two-sweep update: costate backward under `field` (with the source
/// built from `trajectory`), then the state forward from the ground state
/// with each sample damped toward its stationarity value as the sweep passes
/// it. Returns the new field and its (re-propagated) trajectory.
pub fn krotov_iteration(
    problem: &ControlProblem,
    penalty: &PenaltyWeight,
    damping: f64,
    field: &ControlField,
    trajectory: &Trajectory<DensityState>,
) -> Result<(ControlField, Trajectory<DensityState>)> {
    let sys = &problem.system;
    let grid = &problem.grid;
    let n = grid.n_steps;
    let dt = grid.dt();
    let frame = sys.frame;

    let source = costate_source_track(&problem.target, &problem.window, sys, grid, trajectory)?;
    let xi = propagate_costate(sys, grid, field, &source, Mat2::zero())?;

    let ops = update_operators(sys);
    let n_tracks = ops.len();
    let a_of: Vec<f64> = grid
        .times()
        .map(|t| penalty_weight(penalty, grid.t_final, t))
        .collect();

    let damped = |old: TrackSample, xi_m: Mat2, rho_m: Mat2, j: usize| -> TrackSample {
        let mut v = [0.0; 2];
        for (q, op) in ops.iter().enumerate() {
            let u = stationary_value(op, a_of[j], xi_m, rho_m);
            v[q] = (1.0 - damping) * old.v[q] + damping * u;
        }
        TrackSample {
            v,
            tracks: n_tracks,
        }
    };

    let mut new_tracks: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.n_points()); n_tracks];
    let push = |s: TrackSample, tracks: &mut Vec<Vec<f64>>| {
        for (q, track) in tracks.iter_mut().enumerate() {
            track.push(s.v[q]);
        }
    };

    let mut rho = DensityState::ground().to_matrix();
    let mut here = damped(track_sample(field, 0), xi.states[0], rho, 0);
    push(here, &mut new_tracks);

    for j in 0..n {
        let xi_next = xi.states[j + 1];
        let old_next = track_sample(field, j + 1);
        // Predict the end-of-step sample from the start-of-step state, then
        // correct: step -> stationarity value -> step, until self-consistent.
        let mut guess = damped(old_next, xi_next, rho, j + 1);
        let mut rho_next = rho;
        for _ in 0..STEP_FIXED_POINT_MAX {
            rho_next = density_step(
                sys,
                rho,
                dt,
                here.to_sample(frame),
                TrackSample::mid(here, guess).to_sample(frame),
                guess.to_sample(frame),
            );
            let corrected = damped(old_next, xi_next, rho_next, j + 1);
            let delta = TrackSample::max_delta(corrected, guess);
            let scale = guess.v[..n_tracks]
                .iter()
                .fold(1e-6_f64, |m, v| m.max(v.abs()));
            guess = corrected;
            if delta <= STEP_FIXED_POINT_RTOL * scale {
                break;
            }
        }
        if !rho_next.is_finite() {
            return Err(Error::Diverged { step: j + 1 });
        }
        rho = density_step(
            sys,
            rho,
            dt,
            here.to_sample(frame),
            TrackSample::mid(here, guess).to_sample(frame),
            guess.to_sample(frame),
        );
        here = guess;
        push(here, &mut new_tracks);
    }

    let new_field = collect_tracks(frame, new_tracks);
    let new_traj = propagate_density(sys, grid, &new_field, DensityState::ground())?;
    Ok((new_field, new_traj))
}

/// Gradient density of `J` with respect to each field track, assembled from
/// one forward and one backward propagation:
///
/// ```text
/// g_q(t) = kappa * ( -Im<<xi|[U_q, rho]>> - E_q(t)/A(t) )
/// ```
///
/// with `kappa = 2` in the lab frame and `1` in the rotating frame (whose
/// fluence convention carries the cycle-average 1/2). The discrete sensitivity
/// of `J` to sample `E_q(t_j)` is `g_q(t_j) * dt` for interior samples (half
/// that at the ends). Where `A(t) = 0` the penalty term is taken as 0 — the
/// same convention the fluence quadrature uses.
pub fn objective_gradient(
    problem: &ControlProblem,
    penalty: &PenaltyWeight,
    field: &ControlField,
) -> Result<ControlField> {
    let sys = &problem.system;
    let grid = &problem.grid;
    let traj = propagate_density(sys, grid, field, DensityState::ground())?;
    let source = costate_source_track(&problem.target, &problem.window, sys, grid, &traj)?;
    let xi = propagate_costate(sys, grid, field, &source, Mat2::zero())?;

    let ops = update_operators(sys);
    let kappa = match sys.frame {
        Frame::LabExact => 2.0,
        Frame::RotatingRwa => 1.0,
    };

    let mut tracks: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.n_points()); ops.len()];
    for j in 0..grid.n_points() {
        let a = penalty_weight(penalty, grid.t_final, grid.time(j));
        let rho_m = traj.states[j].to_matrix();
        let e = track_sample(field, j);
        for (q, op) in ops.iter().enumerate() {
            let yield_part = -xi.states[j].inner(op.commutator(rho_m)).im;
            let cost_part = if a > 0.0 { e.v[q] / a } else { 0.0 };
            tracks[q].push(kappa * (yield_part - cost_part));
        }
    }
    Ok(collect_tracks(sys.frame, tracks))
}

struct Iterate {
    field: ControlField,
    traj: Trajectory<DensityState>,
    report: FunctionalReport,
}

fn evaluate_iterate(
    problem: &ControlProblem,
    penalty: &PenaltyWeight,
    field: ControlField,
    traj: Trajectory<DensityState>,
) -> Result<Iterate> {
    let report = evaluate_functionals(
        &problem.system,
        &problem.grid,
        &field,
        &traj,
        &problem.target,
        &problem.window,
        penalty,
    )?;
    Ok(Iterate {
        field,
        traj,
        report,
    })
}

/// In penalty-free runs the fluence cost is not part of the objective.
fn strip_penalty(report: &mut FunctionalReport) {
    report.penalty = 0.0;
    report.objective = report.functional;
}

struct RecordContext<'a> {
    thresholds: &'a Thresholds,
    f0: Option<f64>,
}

fn make_record(
    ctx: &RecordContext,
    k: usize,
    report: &FunctionalReport,
    a0: f64,
    prev: Option<&IterationRecord>,
    prev_streak: u32,
) -> IterationRecord {
    let delta0 = ctx.f0.map(|f0| (report.fluence - f0) / f0);
    let delta1 = prev.map(|p| (report.fluence - p.fluence) / report.fluence);
    let functional_gain = prev.map(|p| report.functional - p.functional);
    let objective_gain = prev.map(|p| report.objective - p.objective);

    let fluence_on_target = delta0.is_some_and(|d| d.abs() <= ctx.thresholds.delta0_tol);
    let fluence_settled = delta1.is_some_and(|d| d.abs() <= ctx.thresholds.delta1_tol);
    let gain_in_band =
        functional_gain.is_some_and(|g| g > 0.0 && g <= ctx.thresholds.gain_tol);
    let streak = if fluence_on_target && fluence_settled && gain_in_band {
        prev_streak + 1
    } else {
        0
    };

    IterationRecord {
        k,
        functional: report.functional,
        penalty: report.penalty,
        objective: report.objective,
        fluence: report.fluence,
        a0,
        delta0,
        delta1,
        functional_gain,
        objective_gain,
        fluence_on_target,
        fluence_settled,
        gain_in_band,
        streak,
    }
}

/// Runs the driver selected by `config.mode`, discarding progress.
pub fn optimize(problem: &ControlProblem, config: &OptimizerConfig) -> Result<OptimizationRun> {
    optimize_with(problem, config, &mut SilentProgress)
}

/// Runs the driver selected by `config.mode`, forwarding each iteration
/// record to `sink`.
pub fn optimize_with(
    problem: &ControlProblem,
    config: &OptimizerConfig,
    sink: &mut dyn ProgressSink,
) -> Result<OptimizationRun> {
    match config.mode {
        OptimizeMode::Penalized => penalized_optimize(problem, config, sink),
        OptimizeMode::PenaltyFree => penalty_free_optimize(problem, config, sink),
        OptimizeMode::FluenceTargeted => fluence_targeted_optimize(problem, config, sink),
    }
}

/// Fixed-`a0` two-sweep iteration. Stops once the objective gain falls inside
/// `[0, gain_tol]` (a gain of exactly zero means the update is stationary,
/// which happens immediately for, e.g., a window with no support).
pub fn penalized_optimize(
    problem: &ControlProblem,
    config: &OptimizerConfig,
    sink: &mut dyn ProgressSink,
) -> Result<OptimizationRun> {
    problem.validate()?;
    config.validate()?;
    if config.mode != OptimizeMode::Penalized {
        return Err(Error::Config(format!(
            "penalized driver invoked with mode {}",
            config.mode.name()
        )));
    }
    let penalty = problem.penalty(config.a0_init);
    let ctx = RecordContext {
        thresholds: &config.thresholds,
        f0: None,
    };

    let field = config.initial_field.build(problem)?;
    let traj = propagate_density(&problem.system, &problem.grid, &field, DensityState::ground())?;
    let mut cur = evaluate_iterate(problem, &penalty, field, traj)?;

    let mut history = Vec::new();
    let record = make_record(&ctx, 0, &cur.report, penalty.a0, None, 0);
    sink.on_iteration(&record);
    history.push(record);

    let mut termination = TerminationReason::MaxIterations;
    for k in 1..=config.max_iterations {
        let next = match krotov_iteration(problem, &penalty, config.damping, &cur.field, &cur.traj)
        {
            Ok((field, traj)) => evaluate_iterate(problem, &penalty, field, traj)?,
            Err(Error::Diverged { .. }) => {
                termination = TerminationReason::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        if !next.report.objective.is_finite() || !next.report.fluence.is_finite() {
            termination = TerminationReason::Diverged;
            break;
        }
        let record = make_record(&ctx, k, &next.report, penalty.a0, history.last(), 0);
        let gain = record.objective_gain.expect("k >= 1 has a predecessor");
        sink.on_iteration(&record);
        history.push(record);
        cur = next;
        if gain >= 0.0 && gain <= config.thresholds.gain_tol {
            termination = TerminationReason::Converged;
            break;
        }
    }

    Ok(OptimizationRun {
        config: config.clone(),
        field: cur.field,
        trajectory: cur.traj,
        report: cur.report,
        history,
        termination,
    })
}

/// Maximum step halvings before a penalty-free run gives up.
const MAX_STEP_HALVINGS: u32 = 20;

/// Gradient ascent on the yield alone. Each iteration shifts the field along
/// `eta(t) * (-Im<<xi|[U_q, rho]>>)` scaled by the current step; a step that
/// fails to increase the yield is rolled back and retried with half the step.
pub fn penalty_free_optimize(
    problem: &ControlProblem,
    config: &OptimizerConfig,
    sink: &mut dyn ProgressSink,
) -> Result<OptimizationRun> {
    problem.validate()?;
    config.validate()?;
    if config.mode != OptimizeMode::PenaltyFree {
        return Err(Error::Config(format!(
            "penalty-free driver invoked with mode {}",
            config.mode.name()
        )));
    }
    let sys = &problem.system;
    let grid = &problem.grid;
    // Reporting-only penalty weight; the objective ignores it.
    let penalty = problem.penalty(1.0);
    let ctx = RecordContext {
        thresholds: &config.thresholds,
        f0: None,
    };
    let ops = update_operators(sys);
    let eta: Vec<f64> = grid
        .times()
        .map(|t| penalty_envelope(problem.ramp_width, grid.t_final, t))
        .collect();

    let field = config.initial_field.build(problem)?;
    let traj = propagate_density(sys, grid, &field, DensityState::ground())?;
    let mut cur = evaluate_iterate(problem, &penalty, field, traj)?;
    strip_penalty(&mut cur.report);

    let mut history = Vec::new();
    let record = make_record(&ctx, 0, &cur.report, 0.0, None, 0);
    sink.on_iteration(&record);
    history.push(record);

    let mut step = config.step_size;
    let mut halvings = 0;
    let mut termination = TerminationReason::MaxIterations;
    let mut k = 0;
    while k < config.max_iterations {
        k += 1;
        // Ascent direction from the current iterate (state and costate both
        // propagated under the current field).
        let source = costate_source_track(&problem.target, &problem.window, sys, grid, &cur.traj)?;
        let xi = propagate_costate(sys, grid, &cur.field, &source, Mat2::zero())?;
        let mut ascent: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.n_points()); ops.len()];
        for j in 0..grid.n_points() {
            let rho_m = cur.traj.states[j].to_matrix();
            for (q, op) in ops.iter().enumerate() {
                ascent[q].push(eta[j] * stationary_value(op, 1.0, xi.states[j], rho_m));
            }
        }

        // Backtracking: shrink the step until the yield increases.
        let accepted = loop {
            let candidate = apply_ascent(&cur.field, &ascent, step);
            let outcome = propagate_density(sys, grid, &candidate, DensityState::ground())
                .and_then(|traj| evaluate_iterate(problem, &penalty, candidate, traj));
            match outcome {
                Ok(mut next) => {
                    strip_penalty(&mut next.report);
                    let gain = next.report.functional - cur.report.functional;
                    if gain.is_finite() && gain >= 0.0 {
                        break Some((next, gain));
                    }
                }
                Err(Error::Diverged { .. }) => {}
                Err(e) => return Err(e),
            }
            halvings += 1;
            if halvings > MAX_STEP_HALVINGS {
                break None;
            }
            step *= 0.5;
        };

        let Some((next, gain)) = accepted else {
            termination = TerminationReason::MaxIterations;
            break;
        };
        let record = make_record(&ctx, k, &next.report, 0.0, history.last(), 0);
        sink.on_iteration(&record);
        history.push(record);
        cur = next;
        if gain <= config.thresholds.gain_tol {
            termination = TerminationReason::Converged;
            break;
        }
    }

    Ok(OptimizationRun {
        config: config.clone(),
        field: cur.field,
        trajectory: cur.traj,
        report: cur.report,
        history,
        termination,
    })
}

fn apply_ascent(field: &ControlField, ascent: &[Vec<f64>], step: f64) -> ControlField {
    match field {
        ControlField::Lab(e) => ControlField::Lab(
            e.iter()
                .zip(&ascent[0])
                .map(|(v, g)| v + step * g)
                .collect(),
        ),
        ControlField::Rwa { x, y } => ControlField::Rwa {
            x: x.iter()
                .zip(&ascent[0])
                .map(|(v, g)| v + step * g)
                .collect(),
            y: y.iter()
                .zip(&ascent[1])
                .map(|(v, g)| v + step * g)
                .collect(),
        },
    }
}

/// Relative bound on the per-iteration change of the penalty amplitude.
const A0_MAX_RELATIVE_STEP: f64 = 1e-3;

/// Penalized sweeps with the amplitude retuned toward the fluence target
/// before each sweep: `a0 <- clamp(sqrt(f0/f)) * a0`. Convergence needs
/// `|delta0| <= delta0_tol`, `|delta1| <= delta1_tol` and a yield gain in
/// `(0, gain_tol]` for `required_streak` consecutive iterations, and is only
/// declared when the fluence matches the target to `final_fluence_tol`; a
/// completed streak that misses that mark resets and the controller keeps
/// polishing.
pub fn fluence_targeted_optimize(
    problem: &ControlProblem,
    config: &OptimizerConfig,
    sink: &mut dyn ProgressSink,
) -> Result<OptimizationRun> {
    problem.validate()?;
    config.validate()?;
    if config.mode != OptimizeMode::FluenceTargeted {
        return Err(Error::Config(format!(
            "fluence-targeted driver invoked with mode {}",
            config.mode.name()
        )));
    }
    let f0 = config.target_fluence;
    let ctx = RecordContext {
        thresholds: &config.thresholds,
        f0: Some(f0),
    };

    let mut a0 = config.a0_init;
    let field = config.initial_field.build(problem)?;
    let traj = propagate_density(&problem.system, &problem.grid, &field, DensityState::ground())?;
    let mut cur = evaluate_iterate(problem, &problem.penalty(a0), field, traj)?;

    let mut history = Vec::new();
    let record = make_record(&ctx, 0, &cur.report, a0, None, 0);
    sink.on_iteration(&record);
    history.push(record);

    let mut termination = TerminationReason::MaxIterations;
    for k in 1..=config.max_iterations {
        let ratio = (f0 / cur.report.fluence)
            .sqrt()
            .clamp(1.0 - A0_MAX_RELATIVE_STEP, 1.0 + A0_MAX_RELATIVE_STEP);
        a0 *= ratio;
        let penalty = problem.penalty(a0);

        let next = match krotov_iteration(problem, &penalty, config.damping, &cur.field, &cur.traj)
        {
            Ok((field, traj)) => evaluate_iterate(problem, &penalty, field, traj)?,
            Err(Error::Diverged { .. }) => {
                termination = TerminationReason::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        if !next.report.objective.is_finite() || !next.report.fluence.is_finite() {
            termination = TerminationReason::Diverged;
            break;
        }

        let prev_streak = history.last().map_or(0, |r| r.streak);
        let mut record = make_record(&ctx, k, &next.report, a0, history.last(), prev_streak);
        cur = next;

        if record.streak >= config.thresholds.required_streak {
            let final_err = record.delta0.expect("fluence target is set").abs();
            if final_err <= config.thresholds.final_fluence_tol {
                sink.on_iteration(&record);
                history.push(record);
                termination = TerminationReason::Converged;
                break;
            }
            // The criteria bands are looser than the promised final fluence
            // match; a streak that ends off target starts over.
            record.streak = 0;
        }
        sink.on_iteration(&record);
        history.push(record);
    }

    Ok(OptimizationRun {
        config: config.clone(),
        field: cur.field,
        trajectory: cur.traj,
        report: cur.report,
        history,
        termination,
    })
}
