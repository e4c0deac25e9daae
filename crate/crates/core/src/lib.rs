//! Frequency-domain simulation of single photons passing through ideal
//! spectrometers, dispersive fibers and Michelson interferometers, with three
//! competing pictures of what a photon is.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod elements;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod photon;
pub mod sampling;
pub mod spectral;

pub use error::{Error, Result};
pub use experiments::{run, Executor, ExperimentConfig, ExperimentKind, Mode, RunReport};
pub use photon::{PhotonOntology, SourceSpec};
