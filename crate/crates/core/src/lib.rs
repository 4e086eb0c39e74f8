//! Max-min fair uplink design for RIS-aided multi-user MIMO.
//!
//! The crate covers channel generation, MMSE beamforming, max-min power
//! control, large-system deterministic equivalents, statistical and
//! instantaneous RIS phase design, and the scheme driver used in Monte-Carlo
//! studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod beamforming;
pub mod emf;
pub mod error;
pub mod linalg;
pub mod model;
pub mod parallel;
pub mod phaseopt;
pub mod power;
pub mod rng;
pub mod schemes;

pub use error::{Error, Result};
