//! Robust learning against an attack oracle on finite instance spaces.
//!
//! Every module works on explicit truth tables over at most 64 points, so
//! each quantity the learners rely on (robust risk, dimensions, oracle
//! answers) can be checked exhaustively.

pub mod agnostic_wm;
pub mod compress;
pub mod error;
pub mod games;
pub mod harness;
pub mod online;
pub mod perturb;
pub mod rlua;
pub mod universe;

pub use error::{Error, Result};
