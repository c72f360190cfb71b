//! Planar crowd motion as a controlled sweeping process.
//!
//! `n` rigid disks seek the exit at the origin; nonoverlap constraints act
//! through the normal cone of the feasible set, sweeping the motion along
//! the constraint boundary whenever disks touch. The crate provides
//!
//! - the constraint geometry, perturbation field, and cost ([`model`]),
//! - a catching-up integrator with contact-multiplier recovery
//!   ([`integrator`]),
//! - the closed-form optimal control for two participants ([`two_body`]),
//! - reconstruction and verification of first-order optimality
//!   certificates ([`optimality`]),
//! - a brute-force control sweep that cross-checks the closed forms
//!   ([`search`]), and
//! - a command-line front end ([`cli`]).

// validation deliberately writes `!(x > 0.0)` so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod integrator;
pub mod model;
pub mod optimality;
pub mod search;
pub mod two_body;

pub use error::{Error, Result};
pub use integrator::{simulate, AngleMode, Trajectory};
pub use model::{Configuration, ControlProfile, Scenario};
pub use optimality::{reconstruct_duals, verify, CandidateMotion, DualCertificate};
pub use search::{grid_search, GridSpec};
pub use two_body::{optimize, TwoBodySolution};
