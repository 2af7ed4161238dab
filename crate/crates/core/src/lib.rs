//! Quantum filtering at desk scale: finite-dimensional quantum probability,
//! truncated Fock-space field statistics, symbolic quantum Itô calculus and
//! stochastic integrators for the Zakai and Kushner-Stratonovich filters.

pub mod cli;
pub mod cond;
pub mod config;
pub mod error;
pub mod expm;
pub mod filters;
pub mod fock;
pub mod ito;
pub mod lindblad;
pub mod operator;
pub mod persist;
pub mod random;
pub mod rng;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
pub use lindblad::SystemModel;
pub use operator::{DensityState, Operator, C64};
