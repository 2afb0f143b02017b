//! Desk-scale mini-batch SGD on convex synthetic problems.
//!
//! Produces the empirical `N_Update(M)` measurements that [`crate::lawfit`]
//! fits and [`crate::theory`] bounds. Randomness comes from ChaCha8
//! (`rand_chacha`), seeded per run, so a `(problem, config, seed)` triple
//! fixes the whole trajectory.

mod problem;
mod run;
mod sweep;

pub use problem::{Problem, ProblemKind, Spectrum};
pub use run::{sgd_run, trajectory, InitPolicy, RunRecord, Sgd, SgdConfig, DEFAULT_MAX_UPDATES};
pub use sweep::{aggregate, measure_n_update, run_grid, sweep, AggregateRow, MeasureError, Measurement, SweepError};
