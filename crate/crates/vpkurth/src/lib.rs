//! Steady states and time-periodic solutions of the gravitational
//! Vlasov-Poisson system built around the Kurth equilibrium.
//!
//! The crate provides the closed-form Kurth state and its breathing
//! rescalings, the one-parameter family of anisotropic steady states obtained
//! by capping the angular momentum at Gamma, the half-integral (Abel)
//! machinery that produces their profiles, the radial oscillation dynamics,
//! and Monte Carlo weak-formulation checks.

pub mod abel;
pub mod ensemble;
pub mod error;
pub mod funceq;
pub mod geom;
pub mod io;
pub mod kurth;
pub mod orbit;
pub mod quad;
pub mod reduction;
pub mod steady;
pub mod weakcheck;

pub use error::{Error, Result};
pub use geom::{PhasePoint, Vec3};
