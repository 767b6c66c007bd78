//! L0-regularized compressed sensing with coherent Ising machine solvers.
//!
//! The support vector `σ` is optimized by a simulated coherent Ising machine
//! (either the deterministic mean-field model with chaotic amplitude control,
//! [`solver_mfz`], or the Positive-P stochastic model, [`solver_pp`]), and the
//! signal vector `R` by a classical iterative linear solver ([`cdp`]). The two
//! steps alternate under a decreasing hard-threshold schedule
//! ([`orchestrator`]).
//!
//! Problems come either from the random observation model ([`datagen`]) or
//! from undersampled MRI k-space data in a Haar wavelet basis ([`mri`]).
//! [`harness`] wires everything into seeded, reproducible experiments.

pub mod cdp;
pub mod datagen;
pub mod harness;
mod error;
pub mod mri;
pub mod model;
pub mod operator;
pub mod orchestrator;
pub mod solver_mfz;
pub mod solver_pp;

pub use error::{Error, Result};
pub use model::{CouplingForm, HyperParams, ProblemInstance, SupportSignalPair, Threshold};
pub use operator::GramOperator;
pub use orchestrator::{alternating_minimize, Backend, RunHistory};
