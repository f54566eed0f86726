//! Robust dynamic operating envelopes for unbalanced three-phase
//! distribution networks.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`network`] loads a feeder, solves an exact three-phase power flow and
//!    builds finite-difference voltage sensitivities around it.
//! 2. [`region`] turns those sensitivities into a polyhedral feasible region
//!    `G_p p + G_q q <= h` over active-customer powers.
//! 3. [`rdoe`] inscribes a superellipsoid (and through it a hyperrectangle)
//!    in that region by solving a second-order cone program through the
//!    [`conic`] layer. [`baselines`] provides the comparison methods.
//! 4. [`validation`] stress-tests the resulting envelopes against the exact
//!    power flow and certifies them geometrically.

pub mod baselines;
pub mod conic;
pub mod envelope;
mod error;
pub mod network;
pub mod rdoe;
pub mod redundancy;
pub mod region;
pub mod superellipsoid;
pub mod validation;

pub use envelope::{CustomerEnvelope, EnvelopeAllocation, Method};
pub use error::{Error, Result};
pub use network::{load_network, NetworkModel, Phase, Status};
pub use region::FeasibleRegion;
