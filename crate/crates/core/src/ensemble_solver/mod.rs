//! Lane-batched sparse linear algebra and per-lane convergence tracking.
//!
//! Each sample-dependent scalar is replaced by an `S`-wide lane array.
//! Norms and inner products stay per lane, so the single CG recurrence in
//! [`ensemble_pcg`] is equivalent to `S` independent solves while still
//! sharing the sparsity graph and every loop.

mod lanes;
mod pcg;

pub use lanes::{lane_dots, lane_norms, spmv, EnsembleCsrMatrix, EnsembleScalar, EnsembleVector};
pub use pcg::{
    ensemble_pcg, jacobi_precond, write_residual_history_csv, IdentityPreconditioner,
    JacobiPreconditioner, LaneSolveResult, PcgOptions, Preconditioner,
};
