//! Two-species competition with density-dependent diffusion and taxis:
//! boundedness classifier, finite-volume solver and parameter sweeps.
//!
//! [`model`] holds coefficients, constitutive laws and the boundedness
//! classifier; [`grid`] the finite-volume operators; [`stepper`] the time
//! integration and elliptic solves; [`diagnostics`] the monitors;
//! [`harness`] presets and sweeps; [`cli`] the command-line front end.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod plot;
pub mod stepper;
