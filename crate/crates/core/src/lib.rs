//! Pseudospectral solvers for the cubic nonlinear Schrödinger equation with
//! white noise dispersion on the torus,
//!
//! ```text
//! du = iΔu ∘ dB + iλ|u|²u dt,
//! ```
//!
//! built around a resonance-based integrator for its Wong–Zakai approximation,
//! together with reference schemes and a convergence-study harness.

pub mod error;
pub mod harness;
pub mod integrators;
pub mod kernels;
pub mod paths;
pub mod spectral;

pub use error::{Error, Result};
pub use integrators::{run_trajectory, CnState, PathSource, Scheme, SchemeConfig};
pub use kernels::KernelTable;
pub use num_complex::Complex64;
pub use paths::{BrownianPath, PathGrid, Truncation, WongZakaiPath};
pub use spectral::{SobolevIndex, TorusField};
