//! Pseudo-spectral simulation and diagnostics for the averaged dispersion-managed
//! cubic NLS `i u_t + d_av u_xx = c integral_0^1 exp(-i D Laplacian) F(exp(i D Laplacian) u) dtau`.

pub mod cli;
pub mod config;
pub mod dispersion;
pub mod error;
pub mod grid;
pub mod integrator;
pub mod nonlinearity;
pub mod observables;
pub mod oracle;
pub mod output;
pub mod propagator;
pub mod scattering;
pub mod verify;

pub use error::{Error, Result};
