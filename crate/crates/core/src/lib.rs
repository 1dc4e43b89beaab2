//! Numerical laboratory for Kähler geometry on two model surfaces: the flat
//! torus and the circle-symmetric sphere.
//!
//! Modules:
//!
//! * [`model`]: geometries, potentials, Monge–Ampère density, Laplacians,
//!   curvature and the Green mean-value constant.
//! * [`functionals`]: `I`, `J`, `AM`, entropy and the K-energy.
//! * [`solver`]: Newton solver for the two-parameter continuity equation.
//! * [`flow`]: Kähler–Ricci flow by implicit Euler and its length diagnostics.
//! * [`metric`]: rooftop envelopes, `d₁`, geodesics, path lengths, Calabi distance.
//! * [`group`]: dilation orbits on the sphere, `J_G`, `d₁,G`, Moser–Trudinger
//!   scans and integrability checks.
//! * [`snapshot`]: the `KLAB1` text format.
//! * [`acceptance`]: the end-to-end acceptance suite.

pub mod acceptance;
pub mod error;
pub mod functionals;
pub mod group;
pub mod flow;
pub mod linalg;
pub mod metric;
pub mod model;
pub mod sample;
pub mod snapshot;
pub mod solver;

pub use error::{Error, Result};
pub use model::{make_model, DensityField, ModelGeometry, ModelKind, Potential};
