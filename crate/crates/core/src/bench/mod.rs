//! Regret benchmarks and gradient timing sweeps.

pub mod design;
pub mod experiment;
pub mod objective;
pub mod report;
pub mod timing;

pub use design::{lhs_design, scrambled_halton};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentResult, KernelSpec, RegretTrace, Strategy};
pub use objective::{make_objective, Objective};
pub use report::{results_csv, summarize, Summary};
pub use timing::{timing_csv, timing_sweep, TimingRow};
