//! The adaptive refine-solve-group driver, its test problems and report
//! emission.
//!
//! Each pass of [`adaptive_run`] takes the newest grid level, groups it under
//! every requested strategy, solves it (executing the surrogate-sorted
//! grouping), fits the QoI and iteration surrogates, and refines on the QoI
//! surpluses. Because lanes never interact, one set of solves serves every
//! strategy and ensemble size; each plan is scored against the same measured
//! iteration counts.

mod analytic;
mod config;
mod driver;
mod report;

pub use analytic::{analytic_iters, analytic_qoi, AnalyticQoi};
pub use config::{AnalyticParams, MeshConfig, Problem, Quadrature, RunConfig, SolverConfig};
pub use driver::{adaptive_run, adaptive_run_with};
pub use report::{
    emit_reports, load_report, render_table, EmittedFiles, LevelR, LevelReport, RunReport,
    SampleRecord, StopReason, StrategySummary, SurrogateAccuracy, GRID_JSON, LEVELS_CSV,
    REPORT_JSON, SUMMARY_CSV,
};
