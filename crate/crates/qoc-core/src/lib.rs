//! Optimal-pulse design for a driven, dissipative two-level system.
//!
//! The library models a qubit with transition frequency `omega10` coupled to a
//! classical control field through its dipole moment, relaxing through
//! population decay (rate `gamma_pop`) and pure dephasing (rate `gamma_deph`).
//! On top of that it implements:
//!
//! * [`dynamics`] — density-matrix and costate propagation (fixed-step RK4) in
//!   either the exact lab frame or the resonant rotating-wave frame,
//! * [`objectives`] — superposition-tracking yield functionals, the smooth
//!   control window, the shaped field-penalty weight, purity diagnostics,
//! * [`optimizer`] — monotonic two-sweep pulse iteration, plain gradient
//!   ascent without penalty, and a fluence-targeting outer loop that steers
//!   the penalty weight until the pulse fluence hits a prescribed value,
//! * [`experiments`] — named scenario presets, sweep execution, CSV/JSON
//!   output with a manifest, and cross-evaluation of stored pulses.
//!
//! Everything is deterministic: no randomness enters any computation, so a
//! given configuration reproduces its outputs bit-for-bit.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod mat2;
pub mod objectives;
pub mod optimizer;

pub use error::{Error, Result};
