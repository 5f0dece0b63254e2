//! Equations of motion for a driven, dissipative two-level system.
//!
//! The density matrix obeys
//!
//! ```text
//!   d(rho)/dt = -i [H(t), rho] - Gamma(rho),        hbar = 1
//! ```
//!
//! with `H(t) = H0 - mu * E(t)` in the lab frame, `H0 = diag(0, omega10)`,
//! and a trace-free relaxation superoperator `Gamma` combining population
//! decay `|1> -> |0>` at rate `gamma_pop` and pure dephasing of the coherence
//! at rate `gamma_deph`.
//!
//! The costate (adjoint state) used by gradient and monotonic pulse updates
//! obeys the Hilbert-Schmidt adjoint equation with a sign-flipped relaxation
//! adjoint and an inhomogeneous drive,
//!
//! ```text
//!   d(xi)/dt = -i [H(t), xi] + Gamma^adj(xi) - S(t),   xi(t_final) given,
//! ```
//!
//! integrated backward in time. `Gamma^adj` is the true adjoint under
//! `<<A|B>> = Tr{A^dag B}`, so zero-source forward/backward pairs conserve
//! the pairing `<<xi(t)|rho(t)>>` exactly; with a source the pairing changes
//! at the rate `-<<S(t)|rho(t)>>`.
//!
//! Two frames are supported. `LabExact` integrates the full Hamiltonian with
//! a single real field track and makes no approximation. `RotatingRwa` keeps
//! two quadrature envelopes `(Ex, Ey)` that stand for the physical lab field
//! `E(t) = Ex(t) cos(omega10 t) + Ey(t) sin(omega10 t)`; in the resonant
//! rotating frame the diagonal vanishes and the coupling is
//! `V = -(mu/2) [Ex sigma_x + Ey sigma_y]` after dropping counter-rotating
//! terms.
//!
//! Propagation is classical fixed-step RK4 on a uniform grid. Field samples
//! live on the grid; the half-step values RK4 needs are linear interpolations
//! of adjacent samples. Backward costate steps evaluate stages at mirrored
//! times, which makes the discrete backward map the exact transpose of the
//! discrete forward map — the property the pulse-update machinery relies on.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::Mat2;

/// Reference frame a system (and its field tracks) lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Full Hamiltonian, one real field track, no approximation.
    LabExact,
    /// Resonant rotating frame under the rotating-wave approximation,
    /// two envelope tracks (x and y quadratures).
    RotatingRwa,
}

impl Frame {
    pub fn name(self) -> &'static str {
        match self {
            Frame::LabExact => "lab_exact",
            Frame::RotatingRwa => "rotating_rwa",
        }
    }
}

/// Physical parameters of the two-level system.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSpec {
    /// Transition (angular) frequency of |0> -> |1>.
    pub omega10: f64,
    /// Transition dipole matrix element coupling the field.
    pub mu01: f64,
    /// Population decay rate |1> -> |0>.
    pub gamma_pop: f64,
    /// Pure dephasing rate of the coherence.
    pub gamma_deph: f64,
    /// Frame the equations of motion are integrated in.
    pub frame: Frame,
}

impl Default for SystemSpec {
    fn default() -> Self {
        SystemSpec {
            omega10: 30.0,
            mu01: 1.0,
            gamma_pop: 0.0,
            gamma_deph: 0.0,
            frame: Frame::LabExact,
        }
    }
}

impl SystemSpec {
    /// Checks physical admissibility; messages name the offending field.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.omega10.is_finite() || self.omega10 <= 0.0 {
            return Err(format!("omega10 must be finite and > 0, got {}", self.omega10));
        }
        if !self.mu01.is_finite() || self.mu01 == 0.0 {
            return Err(format!("mu01 must be finite and nonzero, got {}", self.mu01));
        }
        if !self.gamma_pop.is_finite() || self.gamma_pop < 0.0 {
            return Err(format!("gamma_pop must be >= 0, got {}", self.gamma_pop));
        }
        if !self.gamma_deph.is_finite() || self.gamma_deph < 0.0 {
            return Err(format!("gamma_deph must be >= 0, got {}", self.gamma_deph));
        }
        Ok(())
    }

    /// Complete positivity of the relaxation model needs
    /// `gamma_deph >= gamma_pop / 2`. Rate pairs outside that region are
    /// admitted (the relaxation model is phenomenological) but worth
    /// flagging to the caller.
    pub fn physicality_advisory(&self) -> Option<String> {
        if self.gamma_deph < 0.5 * self.gamma_pop {
            Some(format!(
                "gamma_deph = {} is below gamma_pop/2 = {}; the relaxation map \
                 is not completely positive",
                self.gamma_deph,
                0.5 * self.gamma_pop
            ))
        } else {
            None
        }
    }
}

/// Uniform time grid on `[0, t_final]` with `n_steps` RK4 steps
/// (`n_steps + 1` stored points).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            t_final: 25.0,
            n_steps: 30_000,
        }
    }
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        let grid = TimeGrid { t_final, n_steps };
        grid.validate().map_err(Error::Config)?;
        Ok(grid)
    }

    /// `n_steps` must be even so stored tracks can also be sampled at the
    /// half-step resolution RK4 stages use (2*n_steps + 1 points).
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.t_final.is_finite() || self.t_final <= 0.0 {
            return Err(format!("t_final must be finite and > 0, got {}", self.t_final));
        }
        if self.n_steps < 2 || self.n_steps % 2 != 0 {
            return Err(format!("n_steps must be even and >= 2, got {}", self.n_steps));
        }
        Ok(())
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    /// Number of stored grid points (`n_steps + 1`).
    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    #[inline]
    pub fn time(&self, j: usize) -> f64 {
        // t_final * j / n avoids drift from repeated dt addition.
        self.t_final * (j as f64) / (self.n_steps as f64)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points()).map(move |j| self.time(j))
    }
}

/// Hermitian, unit-trace-by-construction state of the two-level system.
/// Only the independent components are stored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityState {
    /// Ground-state population `<0|rho|0>`.
    pub rho00: f64,
    /// Excited-state population `<1|rho|1>`.
    pub rho11: f64,
    /// Coherence `<0|rho|1>`; the (1,0) element is its conjugate.
    pub rho01: C64,
}

impl DensityState {
    pub fn new(rho00: f64, rho11: f64, rho01: C64) -> Self {
        DensityState { rho00, rho11, rho01 }
    }

    /// Pure ground state |0><0|.
    pub fn ground() -> Self {
        DensityState::new(1.0, 0.0, C64::new(0.0, 0.0))
    }

    /// Pure balanced superposition (|0> + |1>)/sqrt(2).
    pub fn balanced() -> Self {
        DensityState::new(0.5, 0.5, C64::new(0.5, 0.0))
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.rho00 + self.rho11
    }

    #[inline]
    pub fn to_matrix(self) -> Mat2 {
        Mat2::new(
            C64::new(self.rho00, 0.0),
            self.rho01,
            self.rho01.conj(),
            C64::new(self.rho11, 0.0),
        )
    }

    /// Projects a numerically Hermitian matrix back onto the stored form
    /// (real diagonal, averaged off-diagonal).
    #[inline]
    pub fn from_matrix(m: Mat2) -> Self {
        DensityState {
            rho00: m.e00.re,
            rho11: m.e11.re,
            rho01: (m.e01 + m.e10.conj()) * 0.5,
        }
    }
}

/// Costate (adjoint state); a general complex 2x2 matrix.
pub type CostateState = Mat2;

/// States stored at every grid point, paired with the grid they live on.
#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    pub grid: TimeGrid,
    pub states: Vec<S>,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.grid.time(j)
    }
}

/// Instantaneous value of the control on one grid point (or half step).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldSample {
    Lab(f64),
    Rwa { x: f64, y: f64 },
}

/// Sampled control field: one real track in the lab frame, two quadrature
/// envelope tracks in the rotating frame. Tracks hold `n_steps + 1` samples.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlField {
    Lab(Vec<f64>),
    Rwa { x: Vec<f64>, y: Vec<f64> },
}

impl ControlField {
    pub fn zeros(frame: Frame, grid: &TimeGrid) -> Self {
        let n = grid.n_points();
        match frame {
            Frame::LabExact => ControlField::Lab(vec![0.0; n]),
            Frame::RotatingRwa => ControlField::Rwa {
                x: vec![0.0; n],
                y: vec![0.0; n],
            },
        }
    }

    pub fn frame(&self) -> Frame {
        match self {
            ControlField::Lab(_) => Frame::LabExact,
            ControlField::Rwa { .. } => Frame::RotatingRwa,
        }
    }

    pub fn n_samples(&self) -> usize {
        match self {
            ControlField::Lab(e) => e.len(),
            ControlField::Rwa { x, .. } => x.len(),
        }
    }

    #[inline]
    pub fn sample(&self, j: usize) -> FieldSample {
        match self {
            ControlField::Lab(e) => FieldSample::Lab(e[j]),
            ControlField::Rwa { x, y } => FieldSample::Rwa { x: x[j], y: y[j] },
        }
    }

    /// Field at the midpoint of step `j` (linear interpolation of the
    /// adjacent samples).
    #[inline]
    pub fn half_sample(&self, j: usize) -> FieldSample {
        match self {
            ControlField::Lab(e) => FieldSample::Lab(0.5 * (e[j] + e[j + 1])),
            ControlField::Rwa { x, y } => FieldSample::Rwa {
                x: 0.5 * (x[j] + x[j + 1]),
                y: 0.5 * (y[j] + y[j + 1]),
            },
        }
    }

    /// Largest sample magnitude across all tracks.
    pub fn max_abs(&self) -> f64 {
        match self {
            ControlField::Lab(e) => e.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            ControlField::Rwa { x, y } => x
                .iter()
                .chain(y.iter())
                .fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }

    pub(crate) fn check_matches(&self, sys: &SystemSpec, grid: &TimeGrid) -> Result<()> {
        if self.frame() != sys.frame {
            return Err(Error::FrameMismatch {
                expected: sys.frame.name(),
                found: self.frame().name(),
            });
        }
        if self.n_samples() != grid.n_points() {
            return Err(Error::GridMismatch(format!(
                "field has {} samples but grid has {} points",
                self.n_samples(),
                grid.n_points()
            )));
        }
        Ok(())
    }
}

/// Hamiltonian at one instant for the given field sample.
#[inline]
pub fn hamiltonian(sys: &SystemSpec, field: FieldSample) -> Mat2 {
    match field {
        FieldSample::Lab(e) => {
            let v = -sys.mu01 * e;
            Mat2::new(
                C64::new(0.0, 0.0),
                C64::new(v, 0.0),
                C64::new(v, 0.0),
                C64::new(sys.omega10, 0.0),
            )
        }
        FieldSample::Rwa { x, y } => {
            // V = -(mu/2)(Ex sigma_x + Ey sigma_y); diagonal removed on resonance.
            let half = 0.5 * sys.mu01;
            Mat2::new(
                C64::new(0.0, 0.0),
                C64::new(-half * x, half * y),
                C64::new(-half * x, -half * y),
                C64::new(0.0, 0.0),
            )
        }
    }
}

/// Derivative of the Hamiltonian with respect to each control track
/// (`dH/dE`): one operator in the lab frame, x/y quadrature operators in the
/// rotating frame (these carry the 1/2 of the rotating-wave coupling).
pub fn drive_operators(sys: &SystemSpec) -> Vec<Mat2> {
    match sys.frame {
        Frame::LabExact => vec![Mat2::new(
            C64::new(0.0, 0.0),
            C64::new(-sys.mu01, 0.0),
            C64::new(-sys.mu01, 0.0),
            C64::new(0.0, 0.0),
        )],
        Frame::RotatingRwa => {
            let half = 0.5 * sys.mu01;
            vec![
                Mat2::new(
                    C64::new(0.0, 0.0),
                    C64::new(-half, 0.0),
                    C64::new(-half, 0.0),
                    C64::new(0.0, 0.0),
                ),
                Mat2::new(
                    C64::new(0.0, 0.0),
                    C64::new(0.0, half),
                    C64::new(0.0, -half),
                    C64::new(0.0, 0.0),
                ),
            ]
        }
    }
}

/// Relaxation superoperator: population transfer 1 -> 0 plus coherence
/// dephasing. Trace-free by construction.
#[inline]
pub fn relaxation_apply(sys: &SystemSpec, m: Mat2) -> Mat2 {
    Mat2::new(
        -sys.gamma_pop * m.e11,
        m.e01 * sys.gamma_deph,
        m.e10 * sys.gamma_deph,
        m.e11 * sys.gamma_pop,
    )
}

/// Adjoint of [`relaxation_apply`] under `<<A|B>> = Tr{A^dag B}`:
/// `<<Gamma^adj xi | rho>> = <<xi | Gamma rho>>` for all `xi`, `rho`.
#[inline]
pub fn relaxation_adjoint_apply(sys: &SystemSpec, m: Mat2) -> Mat2 {
    Mat2::new(
        C64::new(0.0, 0.0),
        m.e01 * sys.gamma_deph,
        m.e10 * sys.gamma_deph,
        (m.e11 - m.e00) * sys.gamma_pop,
    )
}

const MINUS_I: C64 = C64::new(0.0, -1.0);

/// Right-hand side of the density-matrix equation of motion:
/// `-i[H, rho] - Gamma(rho)`.
#[inline]
pub fn density_rhs(sys: &SystemSpec, rho: Mat2, field: FieldSample) -> Mat2 {
    let h = hamiltonian(sys, field);
    h.commutator(rho).scale(MINUS_I) - relaxation_apply(sys, rho)
}

/// Right-hand side of the costate equation (forward-time form):
/// `-i[H, xi] + Gamma^adj(xi) - source`. The plus sign on the relaxation
/// adjoint is what makes zero-source pairings `<<xi|rho>>` constants of
/// motion; with a source, `d/dt <<xi|rho>> = -<<source|rho>>`.
#[inline]
pub fn costate_rhs(sys: &SystemSpec, xi: Mat2, field: FieldSample, source: Mat2) -> Mat2 {
    let h = hamiltonian(sys, field);
    h.commutator(xi).scale(MINUS_I) + relaxation_adjoint_apply(sys, xi) - source
}

/// Inhomogeneous costate drive sampled at half-step resolution:
/// index `2j` is grid point `j`, index `2j + 1` the midpoint of step `j`.
/// Storing true midpoint values (rather than interpolating a rapidly
/// oscillating source linearly) keeps the adjoint gradient clean.
#[derive(Clone, Debug)]
pub struct SourceTrack {
    values: Vec<Mat2>,
}

impl SourceTrack {
    /// Builds a track from values at half-step resolution (`2*n_steps + 1`).
    pub fn from_half_step_values(grid: &TimeGrid, values: Vec<Mat2>) -> Result<Self> {
        if values.len() != 2 * grid.n_steps + 1 {
            return Err(Error::GridMismatch(format!(
                "source track has {} values, expected {}",
                values.len(),
                2 * grid.n_steps + 1
            )));
        }
        Ok(SourceTrack { values })
    }

    pub fn zero(grid: &TimeGrid) -> Self {
        SourceTrack {
            values: vec![Mat2::zero(); 2 * grid.n_steps + 1],
        }
    }

    #[inline]
    pub fn at_grid_point(&self, j: usize) -> Mat2 {
        self.values[2 * j]
    }

    #[inline]
    pub fn at_half_step(&self, j: usize) -> Mat2 {
        self.values[2 * j + 1]
    }
}

/// One RK4 advance of the density matrix across a step of width `dt`, given
/// the field at the step's start, midpoint and end. [`propagate_density`] and
/// the pulse-update sweep both step through this, so a field and the
/// trajectory recorded while building it stay exactly consistent.
#[inline]
pub fn density_step(
    sys: &SystemSpec,
    rho: Mat2,
    dt: f64,
    e0: FieldSample,
    eh: FieldSample,
    e1: FieldSample,
) -> Mat2 {
    let k1 = density_rhs(sys, rho, e0);
    let k2 = density_rhs(sys, rho + k1 * (0.5 * dt), eh);
    let k3 = density_rhs(sys, rho + k2 * (0.5 * dt), eh);
    let k4 = density_rhs(sys, rho + k3 * dt, e1);
    rho + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
}

/// Integrates the density matrix forward from `rho0` over the whole grid
/// with fixed-step RK4, storing the state at every grid point.
pub fn propagate_density(
    sys: &SystemSpec,
    grid: &TimeGrid,
    field: &ControlField,
    rho0: DensityState,
) -> Result<Trajectory<DensityState>> {
    sys.validate().map_err(Error::Config)?;
    grid.validate().map_err(Error::Config)?;
    field.check_matches(sys, grid)?;
    if (rho0.trace() - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "initial state trace must be 1 within 1e-12, got {}",
            rho0.trace()
        )));
    }

    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.n_points());
    let mut rho = rho0.to_matrix();
    states.push(rho0);

    for j in 0..grid.n_steps {
        rho = density_step(
            sys,
            rho,
            dt,
            field.sample(j),
            field.half_sample(j),
            field.sample(j + 1),
        );

        if !rho.is_finite() {
            return Err(Error::Diverged { step: j + 1 });
        }
        states.push(DensityState::from_matrix(rho));
    }

    Ok(Trajectory { grid: *grid, states })
}

/// Integrates the costate backward from `xi_final` at `t_final` down to 0,
/// storing the costate at every grid point. Backward stages are evaluated at
/// mirrored times, making each backward step the exact transpose of the
/// corresponding forward step.
pub fn propagate_costate(
    sys: &SystemSpec,
    grid: &TimeGrid,
    field: &ControlField,
    source: &SourceTrack,
    xi_final: CostateState,
) -> Result<Trajectory<CostateState>> {
    sys.validate().map_err(Error::Config)?;
    grid.validate().map_err(Error::Config)?;
    field.check_matches(sys, grid)?;

    let dt = grid.dt();
    let n = grid.n_steps;
    let mut states = vec![Mat2::zero(); grid.n_points()];
    let mut xi = xi_final;
    states[n] = xi;

    for j in (0..n).rev() {
        // Step from t_{j+1} down to t_j (step -dt).
        let e1 = field.sample(j + 1);
        let eh = field.half_sample(j);
        let e0 = field.sample(j);
        let s1 = source.at_grid_point(j + 1);
        let sh = source.at_half_step(j);
        let s0 = source.at_grid_point(j);

        let k1 = costate_rhs(sys, xi, e1, s1);
        let k2 = costate_rhs(sys, xi - k1 * (0.5 * dt), eh, sh);
        let k3 = costate_rhs(sys, xi - k2 * (0.5 * dt), eh, sh);
        let k4 = costate_rhs(sys, xi - k3 * dt, e0, s0);
        xi = xi - (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);

        if !xi.is_finite() {
            return Err(Error::Diverged { step: j });
        }
        states[j] = xi;
    }

    Ok(Trajectory { grid: *grid, states })
}

/// Bloch vector `(Tr{rho sigma_x}, Tr{rho sigma_y}, Tr{rho sigma_z})` with
/// the convention `sigma_z |0> = +|0>`, so |0><0| maps to (0, 0, 1).
#[inline]
pub fn bloch_vector(rho: &DensityState) -> [f64; 3] {
    [
        2.0 * rho.rho01.re,
        -2.0 * rho.rho01.im,
        rho.rho00 - rho.rho11,
    ]
}
