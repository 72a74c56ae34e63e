//! Embedded ensemble propagation for adaptive sparse-grid stochastic
//! collocation, together with the sample-grouping strategies that keep
//! ensembles from diverging.
//!
//! The crate is organised bottom-up:
//!
//! - [`hier_grid`]: adaptive piecewise-linear hierarchical sparse grid with
//!   several output channels (the QoI surrogate and the iteration surrogate).
//! - [`ensemble_solver`]: width-`S` lane arithmetic, CSR matrices whose
//!   entries are lane arrays, and a preconditioned CG that tracks when every
//!   lane would have converged on its own.
//! - [`random_field`]: truncated log-KL expansion of an exponential covariance
//!   on the unit cube and the anisotropic diffusion tensor built from it.
//! - [`fem3d`]: trilinear hexahedral assembly of the diffusion problem into
//!   lane-batched systems.
//! - [`grouping`]: natural / key-sorted grouping plans and the `R` work
//!   inflation metric.
//! - [`harness`]: the adaptive refine-solve-group loop, the analytic and PDE
//!   test problems, and report emission.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ensemble_solver;
pub mod error;
pub mod fem3d;
pub mod grouping;
pub mod harness;
pub mod hier_grid;
pub mod random_field;

pub use error::{Error, Result};
