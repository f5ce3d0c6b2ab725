//! Noise polyspectra of continuously measured open quantum systems.
//!
//! The crate builds Lindblad-type Liouvillians including measurement
//! back-action, evaluates power spectra, bispectra and trispectra from
//! their eigendecomposition, integrates the stochastic master equation to
//! produce detector records, and estimates the same spectra from those
//! records.

pub mod config;
pub mod eig;
pub mod error;
pub mod estimators;
pub mod liouvillian;
pub mod models;
pub mod operator;
pub mod polyspectra;
pub mod sme;
pub mod validation;

pub mod cli;

pub use error::{Error, Result};
pub use liouvillian::{DissipatorSpec, Liouvillian};
pub use operator::{DensityMatrix, Operator, SuperOperator, C64};
