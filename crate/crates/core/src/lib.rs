//! Herding models of financial markets: agent-level jump processes, their
//! macroscopic SDE limits, market observables, spectral and tail
//! estimators, and exact small-N oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod jump;
pub mod market;
pub mod model;
pub mod oracle;
pub mod sde;
pub mod spectral;
pub mod stats;
pub mod synthetic;
pub mod trajectory;

pub use error::{Error, Result};
