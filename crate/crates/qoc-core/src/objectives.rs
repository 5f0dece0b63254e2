//! Objectives: what "create and hold a superposition" means, quantitatively.
//!
//! Two tracking functionals are supported, both accumulated over a smooth
//! control window `y(t)`:
//!
//! * phase-locked tracking (`Type1`) rewards the real part of the coherence
//!   relative to a rotating reference, `F = 2 Re Int y(t) <<W(t)|rho(t)>> dt`
//!   with `W(t) = (1/2)(e^{-i(w t + theta)} |1><0| + h.c.)`. A perfectly
//!   tracked balanced superposition gives the integrand 1, so the ideal value
//!   of `F` equals the window area.
//! * phase-free tracking (`Type2`) rewards coherence magnitude only,
//!   `F = Int y(t) |<<W|rho(t)>>|^2 dt` with the static `W = 2 |1><0|`; its
//!   ideal integrand is also 1 for a balanced superposition.
//!
//! The field cost is `P = Int E(t)^2 / A(t) dt` with shaped weight
//! `A(t) = A0 * eta(t)`; `eta` ramps on and off as quarter-sine lobes of
//! width `T` at both ends and is 1 in between, forcing smooth pulse edges.
//! The weighted fluence `f = Int E(t)^2 / eta(t) dt` makes `P = f / A0`
//! exact. In the rotating frame both quadrature tracks contribute with the
//! cycle-average factor 1/2, so `f` means the same physical lab-frame fluence
//! in either frame.
//!
//! Purity `Tr{rho^2}` and its exact decay law under relaxation round out the
//! module; the unitary part of the motion conserves purity, so the decay rate
//! depends only on the occupations, the coherence magnitude and the rates.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    ControlField, DensityState, Frame, SourceTrack, SystemSpec, TimeGrid, Trajectory,
};
use crate::error::{Error, Result};
use crate::mat2::Mat2;

/// Which tracking functional to optimize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Phase-locked coherence tracking (linear in the state).
    Type1,
    /// Phase-free coherence-magnitude tracking (quadratic in the state).
    Type2,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Type1 => "type1",
            TargetKind::Type2 => "type2",
        }
    }
}

/// Target operator description.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub kind: TargetKind,
    /// Reference rotation frequency of the phase-locked target;
    /// `None` means resonant (`omega10`).
    #[serde(default)]
    pub omega: Option<f64>,
    /// Phase offset of the phase-locked target.
    #[serde(default)]
    pub theta: f64,
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::type1()
    }
}

impl TargetSpec {
    pub fn type1() -> Self {
        TargetSpec {
            kind: TargetKind::Type1,
            omega: None,
            theta: 0.0,
        }
    }

    pub fn type2() -> Self {
        TargetSpec {
            kind: TargetKind::Type2,
            omega: None,
            theta: 0.0,
        }
    }

    pub fn carrier(&self, sys: &SystemSpec) -> f64 {
        self.omega.unwrap_or(sys.omega10)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if let Some(w) = self.omega {
            if !w.is_finite() || w <= 0.0 {
                return Err(format!("omega must be finite and > 0, got {w}"));
            }
        }
        if !self.theta.is_finite() {
            return Err("theta must be finite".into());
        }
        Ok(())
    }
}

/// Smooth control window: a sum of logistic edges with alternating signs,
/// `y(t) = sum_j (-1)^(j-1) / (1 + exp(-alpha (t - t_j)))`. Edges come in
/// on/off pairs, so an even number of strictly increasing edge times is
/// required.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlWindow {
    pub edges: Vec<f64>,
    #[serde(default = "default_window_alpha")]
    pub alpha: f64,
}

fn default_window_alpha() -> f64 {
    3.0
}

impl ControlWindow {
    pub fn new(edges: Vec<f64>, alpha: f64) -> Result<Self> {
        let w = ControlWindow { edges, alpha };
        w.validate().map_err(Error::Config)?;
        Ok(w)
    }

    /// Single window from `t_on` to `t_off` with the standard steepness.
    pub fn single(t_on: f64, t_off: f64) -> Self {
        ControlWindow {
            edges: vec![t_on, t_off],
            alpha: 3.0,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.edges.is_empty() || self.edges.len() % 2 != 0 {
            return Err(format!(
                "edges must contain an even number of times (on/off pairs), got {}",
                self.edges.len()
            ));
        }
        if !self.edges.windows(2).all(|p| p[0] < p[1]) {
            return Err("edges must be strictly increasing".into());
        }
        if !self.edges.iter().all(|e| e.is_finite() && *e >= 0.0) {
            return Err("edges must be finite and >= 0".into());
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(format!("alpha must be finite and > 0, got {}", self.alpha));
        }
        Ok(())
    }
}

/// Shaped field-penalty weight `A(t) = a0 * eta(t)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PenaltyWeight {
    /// Overall weight; larger values tolerate more fluence.
    pub a0: f64,
    /// Width of the quarter-sine switch-on/off lobes of `eta`.
    pub ramp_width: f64,
}

impl PenaltyWeight {
    pub fn new(a0: f64) -> Self {
        PenaltyWeight {
            a0,
            ramp_width: 1.0,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.a0.is_finite() || self.a0 <= 0.0 {
            return Err(format!("a0 must be finite and > 0, got {}", self.a0));
        }
        if !self.ramp_width.is_finite() || self.ramp_width <= 0.0 {
            return Err(format!(
                "ramp_width must be finite and > 0, got {}",
                self.ramp_width
            ));
        }
        Ok(())
    }
}

/// Scalar outcome of evaluating a field/trajectory pair against a target.
#[derive(Clone, Debug)]
pub struct FunctionalReport {
    /// Tracking yield `F`.
    pub functional: f64,
    /// Field cost `P = fluence / a0`.
    pub penalty: f64,
    /// Combined objective `J = F - P`.
    pub objective: f64,
    /// eta-weighted fluence `f`.
    pub fluence: f64,
    /// Plain (unweighted) fluence.
    pub fluence_plain: f64,
    /// Window area = yield of a perfectly tracked balanced superposition.
    pub ideal: f64,
    /// Target expectation `<<W|rho>>` at every grid point.
    pub expectation: Vec<C64>,
    /// Unweighted integrand track (`F = Int y * integrand dt`): `2 Re <<W|rho>>`
    /// for phase-locked tracking, `|<<W|rho>>|^2` for phase-free tracking.
    pub integrand: Vec<f64>,
}

/// Compensated (Kahan) accumulator. Quadratures feed finite-difference
/// gradient probes that resolve ~1e-12 differences of O(10) sums, where naive
/// summation noise over 30k terms would dominate.
#[derive(Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum
    }
}

/// Trapezoid rule on a uniform grid with compensated summation.
pub(crate) fn trapezoid(values: impl ExactSizeIterator<Item = f64>, dt: f64) -> f64 {
    let n = values.len();
    assert!(n >= 2, "trapezoid needs at least two samples");
    let mut acc = Kahan::default();
    for (j, v) in values.enumerate() {
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        acc.add(w * v);
    }
    acc.total() * dt
}

/// Control window `y(t)`.
pub fn window_envelope(window: &ControlWindow, t: f64) -> f64 {
    let mut y = 0.0;
    let mut sign = 1.0;
    for &edge in &window.edges {
        y += sign / (1.0 + (-window.alpha * (t - edge)).exp());
        sign = -sign;
    }
    y
}

/// Window area over the grid (trapezoid); the ideal yield of either
/// functional for a perfectly tracked balanced superposition.
pub fn window_integral(window: &ControlWindow, grid: &TimeGrid) -> f64 {
    trapezoid(
        (0..grid.n_points()).map(|j| window_envelope(window, grid.time(j))),
        grid.dt(),
    )
}

/// Penalty shape `eta(t)`: quarter-sine ramps of width `ramp_width` at both
/// ends of `[0, t_final]`, 1 on the plateau. Zero exactly at the endpoints,
/// which pins the optimal field to zero there.
pub fn penalty_envelope(ramp_width: f64, t_final: f64, t: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    if t <= 0.0 || t >= t_final {
        0.0
    } else if t < ramp_width {
        (t / ramp_width * FRAC_PI_2).sin()
    } else if t > t_final - ramp_width {
        ((t_final - t) / ramp_width * FRAC_PI_2).sin()
    } else {
        1.0
    }
}

/// Penalty weight `A(t) = a0 * eta(t)`.
pub fn penalty_weight(penalty: &PenaltyWeight, t_final: f64, t: f64) -> f64 {
    penalty.a0 * penalty_envelope(penalty.ramp_width, t_final, t)
}

/// Target operator `W(t)` in the system's frame.
///
/// Phase-locked: `W01 = (1/2) e^{i (w t + theta)}` in the lab frame; in the
/// rotating frame the resonant part of the rotation is absorbed, leaving
/// `W01 = (1/2) e^{i ((w - omega10) t + theta)}`. Phase-free: `W = 2 |1><0|`
/// in both frames (the frame rotation only changes its irrelevant overall
/// phase, which cancels from the functional and the costate source alike).
pub fn target_operator(target: &TargetSpec, sys: &SystemSpec, t: f64) -> Mat2 {
    match target.kind {
        TargetKind::Type1 => {
            let omega = target.carrier(sys);
            let phase = match sys.frame {
                Frame::LabExact => omega * t + target.theta,
                Frame::RotatingRwa => (omega - sys.omega10) * t + target.theta,
            };
            let w01 = 0.5 * C64::new(0.0, phase).exp();
            Mat2::new(C64::new(0.0, 0.0), w01, w01.conj(), C64::new(0.0, 0.0))
        }
        TargetKind::Type2 => Mat2::new(
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(2.0, 0.0),
            C64::new(0.0, 0.0),
        ),
    }
}

/// Target expectation `<<W(t)|rho>> = Tr{W(t)^dag rho}`. Real for the
/// phase-locked target (where it reduces to `Re{e^{-i(w t + theta)} rho01}`
/// in the lab frame), complex with meaningful magnitude for the phase-free
/// one.
pub fn target_expectation(
    target: &TargetSpec,
    sys: &SystemSpec,
    t: f64,
    rho: &DensityState,
) -> C64 {
    match target.kind {
        TargetKind::Type1 => {
            let omega = target.carrier(sys);
            let phase = match sys.frame {
                Frame::LabExact => omega * t + target.theta,
                Frame::RotatingRwa => (omega - sys.omega10) * t + target.theta,
            };
            let v = (C64::new(0.0, -phase).exp() * rho.rho01).re;
            C64::new(v, 0.0)
        }
        TargetKind::Type2 => 2.0 * rho.rho01.conj(),
    }
}

/// Costate drive at one instant. For the linear (phase-locked) functional it
/// is `y(t) W(t)` and needs no state; the quadratic (phase-free) functional
/// linearizes around a trajectory, `y(t) W <<W|rho(t)>>`, so the state at `t`
/// must be supplied.
pub fn costate_source(
    target: &TargetSpec,
    window: &ControlWindow,
    sys: &SystemSpec,
    t: f64,
    rho: Option<&DensityState>,
) -> Mat2 {
    let y = window_envelope(window, t);
    match target.kind {
        TargetKind::Type1 => target_operator(target, sys, t) * y,
        TargetKind::Type2 => {
            let rho = rho.expect("phase-free costate source needs the forward state");
            let w = target_operator(target, sys, t);
            w.scale(target_expectation(target, sys, t, rho) * y)
        }
    }
}

/// Builds the costate drive at half-step resolution for a whole trajectory.
///
/// The phase-locked source is analytic in `t` and is evaluated exactly at the
/// midpoints. The phase-free source needs `rho` between grid points; a
/// 4-point cubic interpolation of the coherence keeps the midpoint values
/// accurate to O(dt^4), well below the costate's own truncation error.
pub fn costate_source_track(
    target: &TargetSpec,
    window: &ControlWindow,
    sys: &SystemSpec,
    grid: &TimeGrid,
    traj: &Trajectory<DensityState>,
) -> Result<SourceTrack> {
    if traj.states.len() != grid.n_points() {
        return Err(Error::GridMismatch(format!(
            "trajectory has {} states but grid has {} points",
            traj.states.len(),
            grid.n_points()
        )));
    }
    let n = grid.n_steps;
    let mut values = Vec::with_capacity(2 * n + 1);
    match target.kind {
        TargetKind::Type1 => {
            for h in 0..(2 * n + 1) {
                let t = 0.5 * h as f64 * grid.dt();
                values.push(costate_source(target, window, sys, t, None));
            }
        }
        TargetKind::Type2 => {
            let w = target_operator(target, sys, 0.0);
            let coh: Vec<C64> = traj.states.iter().map(|s| s.rho01).collect();
            for h in 0..(2 * n + 1) {
                let t = 0.5 * h as f64 * grid.dt();
                let y = window_envelope(window, t);
                let rho01 = if h % 2 == 0 {
                    coh[h / 2]
                } else {
                    cubic_midpoint(&coh, h / 2)
                };
                // <<W|rho>> = 2 conj(rho01) for W = 2|1><0|.
                values.push(w.scale(2.0 * rho01.conj() * y));
            }
        }
    }
    SourceTrack::from_half_step_values(grid, values)
}

/// Cubic (4-point Lagrange) interpolation at the midpoint of `[j, j+1]`.
fn cubic_midpoint(v: &[C64], j: usize) -> C64 {
    let n = v.len();
    debug_assert!(n >= 4 && j + 1 < n);
    if j == 0 {
        v[0] * 0.3125 + v[1] * 0.9375 - v[2] * 0.3125 + v[3] * 0.0625
    } else if j + 2 >= n {
        v[n - 4] * 0.0625 - v[n - 3] * 0.3125 + v[n - 2] * 0.9375 + v[n - 1] * 0.3125
    } else {
        (v[j - 1] * -1.0 + v[j] * 9.0 + v[j + 1] * 9.0 + v[j + 2] * -1.0) * 0.0625
    }
}

/// Purity `Tr{rho^2}` of a unit-trace state expressed through the ground
/// population and coherence magnitude: `2 r00^2 - 2 r00 + 1 + 2 |r01|^2`.
pub fn purity(rho: &DensityState) -> f64 {
    2.0 * rho.rho00 * rho.rho00 - 2.0 * rho.rho00 + 1.0 + 2.0 * rho.rho01.norm_sqr()
}

/// Exact purity decay law under the relaxation superoperator (the unitary
/// part conserves purity): `d/dt Tr{rho^2} =
/// 2 gamma_pop (2 r00 - 1)(1 - r00) - 4 gamma_deph |r01|^2`.
pub fn purity_rate(sys: &SystemSpec, rho: &DensityState) -> f64 {
    2.0 * sys.gamma_pop * (2.0 * rho.rho00 - 1.0) * (1.0 - rho.rho00)
        - 4.0 * sys.gamma_deph * rho.rho01.norm_sqr()
}

/// eta-weighted and plain fluence of a field: `f = Int E^2 / eta dt` and
/// `Int E^2 dt`, with the rotating frame summing both quadratures with the
/// cycle-average factor 1/2. Where `eta` vanishes the weighted integrand is
/// taken as 0; a warning is printed if the field is meaningfully nonzero
/// there, since such support is invisible to the penalty.
pub fn weighted_fluence(grid: &TimeGrid, field: &ControlField, ramp_width: f64) -> (f64, f64) {
    use crate::dynamics::FieldSample;
    let n = grid.n_points();
    let sample_sq = |j: usize| -> f64 {
        match field.sample(j) {
            FieldSample::Lab(e) => e * e,
            FieldSample::Rwa { x, y } => 0.5 * (x * x + y * y),
        }
    };

    let mut warned = false;
    let weighted = trapezoid(
        (0..n).map(|j| {
            let t = grid.time(j);
            let eta = penalty_envelope(ramp_width, grid.t_final, t);
            let e2 = sample_sq(j);
            if eta < 1e-12 {
                if !warned && e2 > 1e-16 {
                    eprintln!(
                        "warning: field amplitude {:.3e} at t = {t} lies outside the \
                         penalty support (eta < 1e-12); treating E^2/eta as 0 there",
                        e2.sqrt()
                    );
                    warned = true;
                }
                0.0
            } else {
                e2 / eta
            }
        }),
        grid.dt(),
    );
    let plain = trapezoid((0..n).map(sample_sq), grid.dt());
    (weighted, plain)
}

/// Evaluates yield, penalty, objective and fluences of a trajectory/field
/// pair. The relation `P = fluence / a0` is exact by construction (same
/// quadrature, single division).
pub fn evaluate_functionals(
    sys: &SystemSpec,
    grid: &TimeGrid,
    field: &ControlField,
    traj: &Trajectory<DensityState>,
    target: &TargetSpec,
    window: &ControlWindow,
    penalty: &PenaltyWeight,
) -> Result<FunctionalReport> {
    if traj.states.len() != grid.n_points() {
        return Err(Error::GridMismatch(format!(
            "trajectory has {} states but grid has {} points",
            traj.states.len(),
            grid.n_points()
        )));
    }
    if field.n_samples() != grid.n_points() {
        return Err(Error::GridMismatch(format!(
            "field has {} samples but grid has {} points",
            field.n_samples(),
            grid.n_points()
        )));
    }

    let n = grid.n_points();
    let mut expectation = Vec::with_capacity(n);
    let mut integrand = Vec::with_capacity(n);
    for (j, rho) in traj.states.iter().enumerate() {
        let g = target_expectation(target, sys, grid.time(j), rho);
        expectation.push(g);
        integrand.push(match target.kind {
            TargetKind::Type1 => 2.0 * g.re,
            TargetKind::Type2 => g.norm_sqr(),
        });
    }

    let functional = trapezoid(
        (0..n).map(|j| window_envelope(window, grid.time(j)) * integrand[j]),
        grid.dt(),
    );
    let (fluence, fluence_plain) = weighted_fluence(grid, field, penalty.ramp_width);
    let penalty_value = fluence / penalty.a0;
    let ideal = window_integral(window, grid);

    Ok(FunctionalReport {
        functional,
        penalty: penalty_value,
        objective: functional - penalty_value,
        fluence,
        fluence_plain,
        ideal,
        expectation,
        integrand,
    })
}
