//! Simulation and verification toolkit for the forced, non-autonomous
//! nonlinear Schrödinger equation of primary resonance
//!
//! ```text
//! -iΨ_τ + Ψ_ζζ + (|Ψ|² - τ)Ψ + F - i(ν/2)Ψ = 0
//! ```
//!
//! together with its growing-frame form, the primary-resonance ODE, the
//! one-soliton asymptotics and a direct sine-Gordon validator for the
//! envelope reduction.

pub mod asymptotics;
pub mod diagnostics;
pub mod error;
pub mod models;
pub mod numerics;
pub mod sine_gordon;
pub mod solvers;

pub use error::{Error, Result};
pub use num_complex::Complex64;
