//! Fixed-point time advance for compressible, viscous, heat-conducting
//! magnetohydrodynamics on a rectangle with an inflow boundary.
//!
//! Each time window is advanced by Picard iteration over four linear
//! subproblems: semi-Lagrangian transport for the density and backward-Euler
//! parabolic solves for velocity, temperature and magnetic field. Monitors for
//! the density min/max envelope, the temperature minimum principle, the a-priori
//! density estimates and the measured contraction rate are reported alongside.

pub mod config;
pub mod constitutive;
pub mod data;
pub mod diagnostics;
pub mod dump;
pub mod error;
pub mod fixed_point;
pub mod field;
pub mod grid;
pub mod norms;
pub mod ops;
pub mod parabolic;
pub mod profiles;
pub mod run;
pub mod scenarios;
pub mod sparse;
pub mod transport;

pub use error::{ConfigIssue, Error, Result};
pub use field::{ScalarField, State, Trajectory, VectorField};
pub use grid::{Extent, FaceTag, Grid, Side};
