//! Inverse Sturm-Liouville potential reconstruction from two spectra.
//!
//! Given (partial, possibly noisy) eigenvalue sequences of -u'' + Qu = λu for
//! boundary conditions (αβ) and (αγ), recover Q by conjugate-gradient descent
//! on the least-squares eigenvalue misfit. Ships a Prüfer-shooting forward
//! solver, the misfit functional with its analytic gradient, a Polak-Ribière
//! minimizer, and numerical checks of the Wronskian identities behind the
//! no-spurious-minima property.

pub mod cli;
pub mod forward;
pub mod functional;
pub mod grid;
pub mod optimizer;
pub mod wronskian;
pub mod ode;
