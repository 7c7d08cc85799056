//! Core numerics for InfoQGAN: a variational quantum-circuit generator trained
//! adversarially against a classical discriminator, with a neural
//! mutual-information term tying a subset of its latent inputs ("codes") to
//! what it generates.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, the command line or text formats lives in the `infoqgan` crate.
//!
//! Module map:
//!
//! * [`qsim`] exact statevector simulation and adjoint gradients
//! * [`generator`] the two ansatz families, noise embeddings and readouts
//! * [`nn`] dense networks, Adam and step-decay schedules
//! * [`mine`] the Donsker-Varadhan mutual-information estimator
//! * [`training`] QGAN / InfoQGAN training loops
//! * [`targets`] 2D target point clouds
//! * [`eval`] 2D KS test, exact MI, correlations, code sweeps
//! * [`finance`] return series, portfolio blends and mean-variance analytics
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod finance;
pub mod generator;
pub mod mine;
pub mod nn;
pub mod qsim;
pub mod seed;
pub mod targets;
pub mod training;

pub use error::{Error, Result};
