//! Numerical affine normal flow of convex hypersurfaces.
//!
//! The flow is simulated through the support function restricted to the chart
//! `Y = (y, -1)`, where it becomes the parabolic Monge–Ampère equation
//! `∂_t s = -(det D²s)^{-1/(n+2)}`. Closed-form solitons serve as oracles and the
//! classical a priori estimates run as monitors along trajectories.

pub mod error;
pub mod estimates;
pub mod flow;
pub mod invariants;
pub mod linalg;
pub mod quadric;
pub mod solitons;
pub mod support;

pub use error::{Error, Result};

/// Crate version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
