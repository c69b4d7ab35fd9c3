//! Control pulses for multiple-spin coherence transfer in Ising spin chains.
//!
//! The crate is organised bottom-up:
//!
//! - [`operator`], [`system`], [`pulse`] and [`evolution`] form the exact
//!   density-operator simulator for up to six weakly coupled spins-1/2.
//! - [`reduced`] holds the four-dimensional reduced dynamics of a linear
//!   three-spin chain driven on the middle spin.
//! - [`analytic`] solves the Euler–Lagrange boundary value problem by
//!   shooting and assembles the resulting semi-analytic pulses.
//! - [`grape`] is gradient ascent pulse engineering with control masks,
//!   restarts and time-optimal-pulse (TOP) curves.
//! - [`sequence`] is the conventional INEPT cascade, hard pulses and event
//!   sequences; [`pulse_io`] reads and writes pulses.
//! - [`dante`] turns a shaped pulse into a refocused DANTE train and
//!   computes offset profiles.
//!
//! Rotation convention: propagators are `U = exp(-i H t)` with `H` in rad/s,
//! so a `+y` pulse of flip angle `φ` maps `I_z → I_z cos φ + I_x sin φ`.
//! All amplitudes, couplings and offsets are in Hz and all times in seconds
//! unless a function says otherwise.

// Links the OpenBLAS implementation behind ndarray's `blas` feature.
extern crate blas_src;

pub mod analytic;
pub mod dante;
pub mod error;
pub mod evolution;
pub mod grape;
pub mod operator;
pub mod pulse;
pub mod pulse_io;
pub mod reduced;
pub mod search;
pub mod sequence;
pub mod system;

pub use error::{Error, Result};
pub use evolution::{evolve_pulse, propagate, transfer_fidelity};
pub use operator::{build_operator, Operator, Pauli, ProductOperatorSpec};
pub use pulse::ShapedPulse;
pub use system::{Axis, ControlChannel, SpinSystem};

/// Complex scalar used throughout the simulator.
pub type C64 = num_complex::Complex64;
