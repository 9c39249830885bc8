//! Photonic random walks on a one-dimensional lattice under stochastic
//! dephasing.
//!
//! The crate covers the coherent tight-binding walk (exact Bessel-kernel
//! propagation), Monte Carlo trajectories with random phase kicks, the
//! classical master equation for the occupation probabilities, the
//! two-dimensional defective random walk obeyed by the occupation
//! correlations `C_{n,m}`, and the coupled fiber-loop map. The ensemble
//! observables that matter are `E[n²]`, which spreads diffusively, and the
//! averaged squared center of mass `E[⟨n⟩²]`, which spreads as `√t`.

pub mod analysis;
pub mod bessel;
pub mod cli;
pub mod coherent;
pub mod correlation;
pub mod dephasing;
pub mod ensemble;
pub mod error;
pub mod fiber;
pub mod lattice;
pub mod master;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
