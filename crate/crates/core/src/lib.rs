//! Liability design for a delegated sequential-testing problem.
//!
//! A firm observes a Brownian signal whose drift reveals whether its product
//! is damaging, pays a flow cost for information, and eventually launches or
//! abandons. A regulator can only penalize the firm, up to a cap, when damage
//! occurs, and only as a function of the evidence level at launch. This crate
//! computes optimal launch/abandon thresholds, synthesizes penalty tariffs
//! implementing target thresholds, and checks the structural properties of
//! incentive-compatible tariffs numerically.

pub mod diffusion;
pub mod error;
pub mod fee;
pub mod mechanism;
pub mod model;
pub mod report;
pub mod scenario;
pub mod simulation;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
