//! Simulation engine for electron transport in quantum-confined nanowires.
//!
//! The chain runs from the cell eigenproblem to device-scale models:
//!
//! - [`bloch`]: eigenpairs of the unit-cell Hamiltonian, gradient matrix
//!   elements, effective masses and cross-section confinement densities.
//! - [`electrostatics`]: band-projected potentials, the partition function,
//!   the charge profile, the mollifier and the nonlinear Poisson solve.
//! - [`transport`]: Scharfetter-Gummel drift-diffusion along the wire axis.
//! - [`kinetic`]: the multiband BGK equation, its diffusion coefficient and
//!   the diffusive-limit harness.
//! - [`selfconsistent`]: Gummel coupling, transient driver and relative
//!   entropy diagnostics.
//!
//! [`grids`] and [`linalg`] hold the shared discretization machinery.

// `!(x > 0.0)` is how NaN gets rejected alongside nonpositive input.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bloch;
pub mod electrostatics;
mod error;
pub mod grids;
pub mod kinetic;
pub mod linalg;
pub mod selfconsistent;
pub mod transport;

pub use error::{Error, Result};
