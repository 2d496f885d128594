//! Numerical core for studying backward-in-time behavior of dissipative PDEs.
//!
//! The crate provides a periodic pseudospectral discretization, tendencies for
//! the KdV–Burgers–Sivashinsky family, damped NLS, complex Ginzburg–Landau,
//! hyperviscous 2D Navier–Stokes and BBM, stiff time integrators with blow-up
//! detection, gauge functionals, Jacobi elliptic machinery for cnoidal waves,
//! and the diagnostics that tie them together.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod elliptic;
pub mod diagnostics;
pub mod error;
pub mod gauge;
pub mod integrator;
pub mod models;
pub mod numerics;
pub mod spectral;

pub use diagnostics::{compute_spectrum, Spectrum};
pub use elliptic::{CnoidalParams, ModulationConstants};
pub use error::{Error, Result};
pub use gauge::{BumpFunction, GaugeFunction, LyapunovValue};
pub use integrator::{IntegratorConfig, RunRecord, Scheme, Verdict};
pub use models::{Direction, PerturbedKdvKind, SpectralModel};
pub use spectral::{Field, Representation, ScalarKind, SpectralGrid};
