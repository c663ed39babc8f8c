//! Numerical toolkit for Gaussian beam quasimodes on compact Riemannian
//! surfaces with boundary and for the analytic-microlocal diagnostics that
//! accompany the injectivity argument for the Calderón problem.

pub mod admissibility;
pub mod cheb;
pub mod error;
pub mod fbi;
pub mod fermi;
pub mod fit;
pub mod geodesic;
pub mod manifold;
pub mod nodejet;
pub mod beam_amplitude;
pub mod beam_phase;
pub mod calderon;
pub mod ode;
pub mod quad;
pub mod quasimode;
pub mod taylor;

pub use error::{Error, Result};
